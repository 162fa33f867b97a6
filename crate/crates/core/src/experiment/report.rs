use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ExperimentError, FractionVector, ModelKind};
use crate::samplers::SamplerKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Mean,
    Variance,
}

impl Statistic {
    pub const ALL: [Statistic; 2] = [Statistic::Mean, Statistic::Variance];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Mean => "mean",
            Statistic::Variance => "variance",
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Squared errors and their means for one sampler in one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub fraction: FractionVector,
    pub model: ModelKind,
    pub sampler: SamplerKind,
    pub mse_mean: f64,
    pub mse_variance: f64,
    /// Repetitions that entered the means.
    pub repetitions: usize,
    /// Repetitions dropped after a failed retry.
    pub failures: usize,
    pub seed: u64,
    pub sq_errors_mean: Vec<f64>,
    pub sq_errors_variance: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl CellReport {
    pub fn new(
        fraction: FractionVector,
        model: ModelKind,
        sampler: SamplerKind,
        seed: u64,
        failures: usize,
        sq_errors_mean: Vec<f64>,
        sq_errors_variance: Vec<f64>,
    ) -> Self {
        Self {
            fraction,
            model,
            sampler,
            mse_mean: mean(&sq_errors_mean),
            mse_variance: mean(&sq_errors_variance),
            repetitions: sq_errors_mean.len(),
            failures,
            seed,
            sq_errors_mean,
            sq_errors_variance,
        }
    }

    pub fn mse(&self, stat: Statistic) -> f64 {
        match stat {
            Statistic::Mean => self.mse_mean,
            Statistic::Variance => self.mse_variance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    /// Repetitions requested per cell.
    pub reps: usize,
    pub population_size: usize,
    pub true_mean: f64,
    pub true_variance: f64,
    pub cells: Vec<CellReport>,
}

/// Column order of the long-format CSV.
pub const CSV_COLUMNS: [&str; 7] = ["fraction", "model", "sampler", "statistic", "mse", "reps", "failures"];

impl ExperimentReport {
    pub fn cell(&self, fraction: &str, model: ModelKind, sampler: SamplerKind) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.fraction.label() == fraction && c.model == model && c.sampler == sampler)
    }

    /// Distinct fraction labels in run order.
    pub fn fraction_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.cells {
            let l = c.fraction.label();
            if !out.contains(&l) {
                out.push(l);
            }
        }
        out
    }

    pub fn models(&self) -> Vec<ModelKind> {
        let mut out: Vec<ModelKind> = self.cells.iter().map(|c| c.model).collect();
        out.sort();
        out.dedup();
        out
    }

    /// One row per cell and statistic.
    pub fn write_csv(&self, writer: impl Write) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_COLUMNS)?;
        for c in &self.cells {
            for stat in Statistic::ALL {
                w.write_record([
                    c.fraction.label(),
                    c.model.to_string(),
                    c.sampler.to_string(),
                    stat.to_string(),
                    format!("{:e}", c.mse(stat)),
                    c.repetitions.to_string(),
                    c.failures.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `model → fraction → sampler → statistics`.
    pub fn to_json(&self) -> Value {
        let mut models: BTreeMap<String, BTreeMap<String, BTreeMap<String, Value>>> = BTreeMap::new();
        for c in &self.cells {
            models
                .entry(c.model.to_string())
                .or_default()
                .entry(c.fraction.label())
                .or_default()
                .insert(
                    c.sampler.to_string(),
                    json!({
                        "mse_mean": c.mse_mean,
                        "mse_variance": c.mse_variance,
                        "repetitions": c.repetitions,
                        "failures": c.failures,
                        "seed": c.seed,
                        "squared_errors": {
                            "mean": c.sq_errors_mean,
                            "variance": c.sq_errors_variance,
                        },
                    }),
                );
        }
        json!({
            "seed": self.seed,
            "reps": self.reps,
            "population_size": self.population_size,
            "true_mean": self.true_mean,
            "true_variance": self.true_variance,
            "results": models,
        })
    }

    pub fn write_json(&self, mut writer: impl Write) -> Result<(), ExperimentError> {
        serde_json::to_writer_pretty(&mut writer, &self.to_json())?;
        writeln!(writer)?;
        Ok(())
    }

    /// Chart-ready rows `(fraction label, sampler, mse)` for one model and
    /// statistic.
    pub fn plot_rows(&self, model: ModelKind, stat: Statistic) -> Vec<(String, SamplerKind, f64)> {
        self.cells
            .iter()
            .filter(|c| c.model == model)
            .map(|c| (c.fraction.label(), c.sampler, c.mse(stat)))
            .collect()
    }

    /// Writes `plot_<model>_<statistic>.csv` for every model present.
    pub fn write_plot_files(&self, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        let mut paths = Vec::new();
        for model in self.models() {
            for stat in Statistic::ALL {
                let path = dir.join(format!("plot_{model}_{stat}.csv"));
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["fraction_label", "sampler", "mse"])?;
                for (label, sampler, mse) in self.plot_rows(model, stat) {
                    w.write_record([label, sampler.to_string(), format!("{mse:e}")])?;
                }
                w.flush()?;
                paths.push(path);
            }
        }
        Ok(paths)
    }
}
