//! Run configuration: defaults, then a flat TOML file, then command-line
//! flags, in increasing priority.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use varsample::experiment::{default_fractions, FractionVector, ModelKind, ModelSpec};
use varsample::models::Hyperparams;
use varsample::samplers::SamplerKind;
use varsample::synthetic::{DEFAULT_COMPONENTS, DEFAULT_GRID_SIDE};

use crate::CliError;

pub const SEED_ENV: &str = "VARSAMPLE_SEED";
pub const SYNTH_INPUT: &str = "synth";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Fully resolved settings of one run. Saved next to the results so the run
/// can be repeated with `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// CSV path, or `synth` for a generated mixture population.
    pub input: String,
    pub features: Vec<String>,
    pub target: String,
    pub models: Vec<ModelKind>,
    pub samplers: Vec<SamplerKind>,
    /// `prior/sample/test` shares, e.g. `0.1/0.6/0.3`.
    pub fractions: Vec<String>,
    pub reps: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub format: Format,
    pub rls_alphas: Vec<f64>,
    pub rls_betas: Vec<f64>,
    pub mlp_alphas: Vec<f64>,
    pub mlp_betas: Vec<f64>,
    pub hidden: usize,
    pub cv_folds: usize,
    pub synth_seed: u64,
    pub grid_side: usize,
    pub components: usize,
}

/// Same keys as [`RunConfig`], all optional, as read from a file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub input: Option<String>,
    pub features: Option<Vec<String>>,
    pub target: Option<String>,
    pub models: Option<Vec<ModelKind>>,
    pub samplers: Option<Vec<SamplerKind>>,
    pub fractions: Option<Vec<String>>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub rls_alphas: Option<Vec<f64>>,
    pub rls_betas: Option<Vec<f64>>,
    pub mlp_alphas: Option<Vec<f64>>,
    pub mlp_betas: Option<Vec<f64>>,
    pub hidden: Option<usize>,
    pub cv_folds: Option<usize>,
    pub synth_seed: Option<u64>,
    pub grid_side: Option<usize>,
    pub components: Option<usize>,
}

impl PartialConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }

    /// Overwrites every field set in `other`.
    pub fn overlay(self, other: PartialConfig) -> PartialConfig {
        macro_rules! pick {
            ($($f:ident),*) => { PartialConfig { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            input, features, target, models, samplers, fractions, reps, seed, out, format, rls_alphas, rls_betas,
            mlp_alphas, mlp_betas, hidden, cv_folds, synth_seed, grid_side, components
        )
    }

    /// Fills the gaps with defaults. A missing seed falls back to `env_seed`.
    pub fn resolve(self, env_seed: Option<String>) -> Result<RunConfig, CliError> {
        let seed = match (self.seed, env_seed) {
            (Some(s), _) => s,
            (None, Some(v)) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?,
            (None, None) => 0,
        };
        let grid = ModelSpec::rls().grid;
        let axis = |pick: fn(&Hyperparams) -> f64| {
            let mut v: Vec<f64> = grid.iter().map(pick).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let alphas = axis(|h| h.alpha);
        let betas = axis(|h| h.beta);
        let input = self.input.unwrap_or_else(|| SYNTH_INPUT.to_string());
        let features = self.features.unwrap_or_else(|| {
            if input == SYNTH_INPUT {
                vec!["x1".into(), "x2".into()]
            } else {
                Vec::new()
            }
        });
        let cfg = RunConfig {
            input,
            features,
            target: self.target.unwrap_or_else(|| "y".into()),
            models: self.models.unwrap_or_else(|| vec![ModelKind::Rls, ModelKind::Mlp]),
            samplers: self.samplers.unwrap_or_else(|| SamplerKind::ALL.to_vec()),
            fractions: self
                .fractions
                .unwrap_or_else(|| default_fractions().iter().map(fraction_text).collect()),
            reps: self.reps.unwrap_or(100),
            seed,
            out: self.out.unwrap_or_else(|| PathBuf::from("varsample-out")),
            format: self.format.unwrap_or(Format::Csv),
            rls_alphas: self.rls_alphas.unwrap_or_else(|| alphas.clone()),
            rls_betas: self.rls_betas.unwrap_or_else(|| betas.clone()),
            mlp_alphas: self.mlp_alphas.unwrap_or(alphas),
            mlp_betas: self.mlp_betas.unwrap_or(betas),
            hidden: self.hidden.unwrap_or(ModelSpec::mlp().hidden),
            cv_folds: self.cv_folds.unwrap_or(ModelSpec::mlp().cv_folds),
            synth_seed: self.synth_seed.unwrap_or(0),
            grid_side: self.grid_side.unwrap_or(DEFAULT_GRID_SIDE),
            components: self.components.unwrap_or(DEFAULT_COMPONENTS),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fraction_text(f: &FractionVector) -> String {
    format!("{}/{}/{}", f.prior, f.sample, f.test)
}

pub fn parse_fraction(text: &str) -> Result<FractionVector, CliError> {
    let parts: Vec<&str> = text.split('/').map(str::trim).collect();
    let bad = || CliError::Config(format!("fraction `{text}` must look like prior/sample/test, e.g. 0.1/0.6/0.3"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| bad())?;
    }
    FractionVector::new(v[0], v[1], v[2]).map_err(|e| CliError::Config(format!("fraction `{text}`: {e}")))
}

fn grid(alphas: &[f64], betas: &[f64], name: &str) -> Result<Vec<Hyperparams>, CliError> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(CliError::Config(format!("{name} hyperparameter grid is empty")));
    }
    alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .map(|(a, b)| Hyperparams::new(a, b).map_err(|e| CliError::Config(format!("{name} grid: {e}"))))
        .collect()
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.reps == 0 {
            return fail("reps must be at least 1".into());
        }
        if self.models.is_empty() {
            return fail("no model selected".into());
        }
        if self.samplers.is_empty() {
            return fail("no sampler selected".into());
        }
        if self.fractions.is_empty() {
            return fail("no fraction vectors given".into());
        }
        if self.features.is_empty() {
            return fail(format!("no feature columns given for input {}", self.input));
        }
        if self.models.contains(&ModelKind::Mlp) && self.cv_folds < 2 {
            return fail("cv_folds must be at least 2".into());
        }
        if self.input == SYNTH_INPUT && (self.grid_side < 2 || self.components == 0) {
            return fail("synthetic input needs grid_side >= 2 and at least one component".into());
        }
        self.fraction_vectors()?;
        self.model_specs()?;
        Ok(())
    }

    pub fn fraction_vectors(&self) -> Result<Vec<FractionVector>, CliError> {
        self.fractions.iter().map(|f| parse_fraction(f)).collect()
    }

    pub fn model_specs(&self) -> Result<Vec<ModelSpec>, CliError> {
        let mut models = self.models.clone();
        models.sort();
        models.dedup();
        models
            .into_iter()
            .map(|kind| {
                Ok(match kind {
                    ModelKind::Rls => ModelSpec {
                        grid: grid(&self.rls_alphas, &self.rls_betas, "rls")?,
                        ..ModelSpec::rls()
                    },
                    ModelKind::Mlp => ModelSpec {
                        grid: grid(&self.mlp_alphas, &self.mlp_betas, "mlp")?,
                        hidden: self.hidden,
                        cv_folds: self.cv_folds,
                        ..ModelSpec::mlp()
                    },
                })
            })
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }
}
