//! Monte-Carlo comparison of sampling designs.
//!
//! One repetition draws a prior set `D_p` shared by every sampler, selects
//! hyperparameters on it, lets each sampler pick `D_s` from the rest, refits
//! on `D = D_p ∪ D_s` and plugs model predictions on `V = U ∖ D` into the
//! population mean and variance estimators.

mod report;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, fraction_count, min_prior_size, DatasetError, IndexSet, Population};
use crate::models::{
    fit_linear, fit_mlp, loocv_select, mlp_cv_select, Hyperparams, MlpLayout, ModelError, PredictiveDistribution,
    PredictiveModel, TrainConfig, TrainingSet,
};
use crate::samplers::{bmvi_sample, lpm_sample, srs_sample, SamplerError, SamplerKind};
use crate::seeds;

pub use report::{CellReport, ExperimentReport, Statistic, CSV_COLUMNS};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("fractions ({prior}, {sample}, {test}) must lie in (0, 1) and sum to 1")]
    BadFractions { prior: f64, sample: f64, test: f64 },
    #[error(
        "fraction {label} is infeasible for {n} points with {m} features: \
         prior = {prior}, sample = {sample}, test = {test} (prior needs at least {needed})"
    )]
    Infeasible {
        label: String,
        n: usize,
        m: usize,
        prior: usize,
        sample: usize,
        test: usize,
        needed: usize,
    },
    #[error("labelled and predicted sets do not partition the population")]
    NotAPartition,
    #[error("no repetitions requested")]
    NoRepetitions,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Shares of the population going to the prior set, the sample and the
/// untouched test block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionVector {
    pub prior: f64,
    pub sample: f64,
    pub test: f64,
}

impl FractionVector {
    pub fn new(prior: f64, sample: f64, test: f64) -> Result<Self, ExperimentError> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !(open(prior) && open(sample) && open(test)) || (prior + sample + test - 1.0).abs() > 1e-12 {
            return Err(ExperimentError::BadFractions { prior, sample, test });
        }
        Ok(Self { prior, sample, test })
    }

    /// Short label such as `.1/.6/.3`.
    pub fn label(&self) -> String {
        let short = |v: f64| {
            let s = format!("{}", (v * 1e6).round() / 1e6);
            s.strip_prefix('0').map(str::to_string).unwrap_or(s)
        };
        format!("{}/{}/{}", short(self.prior), short(self.sample), short(self.test))
    }

    /// `(|D_p|, |D_s|, |V|)` for a population of `n` points.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let prior = fraction_count(self.prior, n);
        let sample = fraction_count(self.sample, n);
        (prior, sample, n.saturating_sub(prior + sample))
    }

    /// Errors unless the prior set can support a fit on `m` features and
    /// the sample is non-empty.
    pub fn check_feasible(&self, n: usize, m: usize) -> Result<(usize, usize, usize), ExperimentError> {
        let (prior, sample, test) = self.sizes(n);
        let needed = min_prior_size(m);
        if prior < needed || sample == 0 || prior + sample > n {
            return Err(ExperimentError::Infeasible {
                label: self.label(),
                n,
                m,
                prior,
                sample,
                test,
                needed,
            });
        }
        Ok((prior, sample, test))
    }
}

impl fmt::Display for FractionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Prior and sample shares in {0.1, …, 0.6} summing to 0.7, test fixed at 0.3.
pub fn default_fractions() -> Vec<FractionVector> {
    (1..=6)
        .map(|i| FractionVector {
            prior: i as f64 / 10.0,
            sample: (7 - i) as f64 / 10.0,
            test: 0.3,
        })
        .collect()
}

/// Plug-in estimates `μ̂` and `σ̂²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorPair {
    pub mean_hat: f64,
    pub var_hat: f64,
}

/// Observed `y` on `d`, model mean predictions on `v`.
pub fn estimate_population<M: PredictiveModel + ?Sized>(
    d: &IndexSet,
    v: &IndexSet,
    model: &M,
    pop: &Population,
) -> Result<EstimatorPair, ExperimentError> {
    if !dataset::is_partition(pop, &[d, v]) {
        return Err(ExperimentError::NotAPartition);
    }
    let mut values: Vec<f64> = d.iter().map(|id| pop.point(id).y).collect();
    for id in v.iter() {
        values.push(model.predict_mean(&pop.point(id).x)?);
    }
    let n = values.len() as f64;
    let mean_hat = values.iter().sum::<f64>() / n;
    let var_hat = values.iter().map(|v| (v - mean_hat).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(EstimatorPair { mean_hat, var_hat })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rls,
    Mlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rls => "rls",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rls" => Ok(ModelKind::Rls),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(format!("unknown model `{other}` (expected rls or mlp)")),
        }
    }
}

/// Model family plus everything needed to select and fit it.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub grid: Vec<Hyperparams>,
    /// Hidden units of the MLP; ignored for RLS.
    pub hidden: usize,
    pub train: TrainConfig,
    /// Folds of the MLP cross-validation; RLS uses leave-one-out.
    pub cv_folds: usize,
}

impl ModelSpec {
    pub fn rls() -> Self {
        Self {
            kind: ModelKind::Rls,
            grid: crate::models::default_grid(),
            hidden: 0,
            train: TrainConfig::default(),
            cv_folds: 0,
        }
    }

    pub fn mlp() -> Self {
        Self {
            kind: ModelKind::Mlp,
            grid: crate::models::default_grid(),
            hidden: 8,
            train: TrainConfig::default(),
            cv_folds: 3,
        }
    }

    fn layout(&self, m: usize) -> MlpLayout {
        if self.hidden == 0 {
            MlpLayout::linear(m)
        } else {
            MlpLayout::new(m, self.hidden)
        }
    }
}

/// Affine target scaling `y = offset + scale · z` fixed from the prior set,
/// so one grid of `β` values suits populations of any response scale.
#[derive(Clone, Copy, Debug, PartialEq)]
struct TargetScale {
    offset: f64,
    scale: f64,
}

impl TargetScale {
    fn from(data: &TrainingSet) -> Self {
        let (offset, var) = dataset::mean_and_variance(data.targets().iter().copied());
        let sd = var.sqrt();
        Self {
            offset,
            scale: if sd > 0.0 && sd.is_finite() { sd } else { 1.0 },
        }
    }

    fn to_unit(self, data: &TrainingSet) -> TrainingSet {
        data.map_targets(|y| (y - self.offset) / self.scale)
    }
}

/// A model trained on scaled targets, reporting in the original units.
struct Rescaled {
    inner: Box<dyn PredictiveModel>,
    scale: TargetScale,
}

impl PredictiveModel for Rescaled {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn hyperparams(&self) -> Hyperparams {
        self.inner.hyperparams()
    }

    fn predict(&self, x: &[f64]) -> Result<PredictiveDistribution, ModelError> {
        let p = self.inner.predict(x)?;
        Ok(PredictiveDistribution {
            mean: self.scale.offset + self.scale.scale * p.mean,
            variance: self.scale.scale * self.scale.scale * p.variance,
        })
    }

    fn predict_mean(&self, x: &[f64]) -> Result<f64, ModelError> {
        Ok(self.scale.offset + self.scale.scale * self.inner.predict_mean(x)?)
    }
}

const STAGE_PRIOR: u64 = seeds::tag("prior");
const STAGE_CV: u64 = seeds::tag("cv");
const STAGE_PRIOR_FIT: u64 = seeds::tag("priorfit");
const STAGE_SAMPLE: u64 = seeds::tag("sample");
const STAGE_REFIT: u64 = seeds::tag("refit");
const RETRY: u64 = seeds::tag("retry");

/// Random streams of one repetition attempt.
///
/// Every stream is keyed by the run seed, the cell (fractions and model),
/// the repetition index, the attempt and the stage, so any stage can be
/// replayed on its own.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RepetitionSeeds {
    base: u64,
}

impl RepetitionSeeds {
    pub fn new(seed: u64, fraction: &FractionVector, model: ModelKind, rep: usize, attempt: usize) -> Self {
        let mut parts = vec![
            seed,
            fraction.prior.to_bits(),
            fraction.sample.to_bits(),
            seeds::tag(model.name()),
            rep as u64,
        ];
        if attempt > 0 {
            parts.extend([RETRY, attempt as u64]);
        }
        Self {
            base: seeds::derive(&parts),
        }
    }

    fn stream(&self, parts: &[u64]) -> u64 {
        let mut all = vec![self.base];
        all.extend_from_slice(parts);
        seeds::derive(&all)
    }

    pub fn prior(&self) -> u64 {
        self.stream(&[STAGE_PRIOR])
    }

    pub fn cv(&self) -> u64 {
        self.stream(&[STAGE_CV])
    }

    pub fn prior_fit(&self) -> u64 {
        self.stream(&[STAGE_PRIOR_FIT])
    }

    pub fn sample(&self, sampler: SamplerKind) -> u64 {
        self.stream(&[seeds::tag(sampler.name()), STAGE_SAMPLE])
    }

    pub fn refit(&self, sampler: SamplerKind) -> u64 {
        self.stream(&[seeds::tag(sampler.name()), STAGE_REFIT])
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// What one sampler did in one repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerOutcome {
    pub sampler: SamplerKind,
    /// The prior set this sampler was given.
    pub prior: IndexSet,
    pub sample: IndexSet,
    pub unlabelled: IndexSet,
    pub estimate: EstimatorPair,
    pub sq_error_mean: f64,
    pub sq_error_variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub index: usize,
    pub attempt: usize,
    pub prior: IndexSet,
    pub hyper: Hyperparams,
    pub outcomes: Vec<SamplerOutcome>,
}

/// A population prepared for simulation: features standardized once, true
/// parameters taken from the full response column.
#[derive(Clone, Debug)]
pub struct Experiment {
    pop: Population,
}

impl Experiment {
    pub fn new(pop: &Population) -> Result<Self, ExperimentError> {
        let (pop, _) = dataset::standardize(pop)?;
        Ok(Self { pop })
    }

    pub fn population(&self) -> &Population {
        &self.pop
    }

    fn fit(&self, spec: &ModelSpec, data: &TrainingSet, hyper: Hyperparams, seed: u64) -> Result<Box<dyn PredictiveModel>, ModelError> {
        Ok(match spec.kind {
            ModelKind::Rls => Box::new(fit_linear(data, hyper)?),
            ModelKind::Mlp => Box::new(fit_mlp(data, spec.layout(self.pop.dim()), hyper, &spec.train, &mut rng(seed))?),
        })
    }

    fn select(&self, spec: &ModelSpec, data: &TrainingSet, seed: u64) -> Result<Hyperparams, ModelError> {
        match spec.kind {
            ModelKind::Rls => loocv_select(data, &spec.grid),
            ModelKind::Mlp => mlp_cv_select(data, spec.layout(self.pop.dim()), &spec.grid, &spec.train, spec.cv_folds, seed),
        }
    }

    /// One attempt of one repetition for every requested sampler.
    pub fn run_repetition(
        &self,
        fraction: &FractionVector,
        spec: &ModelSpec,
        samplers: &[SamplerKind],
        seed: u64,
        rep: usize,
        attempt: usize,
    ) -> Result<Repetition, ExperimentError> {
        let pop = &self.pop;
        let (_, sample_size, _) = fraction.check_feasible(pop.len(), pop.dim())?;
        let seeds = RepetitionSeeds::new(seed, fraction, spec.kind, rep, attempt);

        let (prior, rest) = dataset::split_prior(pop, fraction.prior, &mut rng(seeds.prior()))?;
        let prior_data = TrainingSet::from_population(pop, &prior);
        let scale = TargetScale::from(&prior_data);
        let hyper = self.select(spec, &scale.to_unit(&prior_data), seeds.cv())?;

        let prior_model = if samplers.contains(&SamplerKind::Bmvi) {
            let inner = self.fit(spec, &scale.to_unit(&prior_data), hyper, seeds.prior_fit())?;
            Some(Rescaled { inner, scale })
        } else {
            None
        };

        let mut outcomes = Vec::with_capacity(samplers.len());
        for &sampler in samplers {
            let mut sampler_rng = rng(seeds.sample(sampler));
            let sample = match sampler {
                SamplerKind::Srs => srs_sample(&rest, sample_size, &mut sampler_rng)?,
                SamplerKind::Lpm => lpm_sample(&rest, pop, sample_size, &mut sampler_rng)?,
                SamplerKind::Bmvi => {
                    let model = prior_model.as_ref().expect("fitted when BMVI is requested");
                    bmvi_sample(&prior, &rest, sample_size, model, pop)?
                }
            }
            .selected;
            let labelled = prior.union(&sample);
            let unlabelled = pop.all_ids().difference(&labelled);
            let data = TrainingSet::from_population(pop, &labelled);
            let model = Rescaled {
                inner: self.fit(spec, &scale.to_unit(&data), hyper, seeds.refit(sampler))?,
                scale,
            };
            let estimate = estimate_population(&labelled, &unlabelled, &model, pop)?;
            outcomes.push(SamplerOutcome {
                sampler,
                prior: prior.clone(),
                sample,
                unlabelled,
                sq_error_mean: (estimate.mean_hat - pop.true_mean()).powi(2),
                sq_error_variance: (estimate.var_hat - pop.true_variance()).powi(2),
                estimate,
            });
        }
        Ok(Repetition {
            index: rep,
            attempt,
            prior,
            hyper,
            outcomes,
        })
    }

    /// A repetition with one retry for model-fitting failures. `Ok(None)`
    /// means both attempts failed to fit an MLP.
    fn run_with_retry(
        &self,
        fraction: &FractionVector,
        spec: &ModelSpec,
        samplers: &[SamplerKind],
        seed: u64,
        rep: usize,
    ) -> Result<Option<Repetition>, ExperimentError> {
        for attempt in 0..2 {
            match self.run_repetition(fraction, spec, samplers, seed, rep, attempt) {
                Ok(r) => return Ok(Some(r)),
                Err(e) if spec.kind == ModelKind::Mlp && is_fit_failure(&e) => {
                    log::warn!("{} {} repetition {rep} attempt {attempt}: {e}", spec.kind, fraction);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(None)
    }

    /// All repetitions of one (fraction, model) cell, one report per sampler.
    pub fn run_cell(
        &self,
        fraction: &FractionVector,
        spec: &ModelSpec,
        samplers: &[SamplerKind],
        reps: usize,
        seed: u64,
    ) -> Result<Vec<CellReport>, ExperimentError> {
        if reps == 0 {
            return Err(ExperimentError::NoRepetitions);
        }
        fraction.check_feasible(self.pop.len(), self.pop.dim())?;
        let results = (0..reps)
            .into_par_iter()
            .map(|rep| self.run_with_retry(fraction, spec, samplers, seed, rep))
            .collect::<Result<Vec<_>, _>>()?;

        let failures = results.iter().filter(|r| r.is_none()).count();
        let cells = samplers
            .iter()
            .enumerate()
            .map(|(s, &sampler)| {
                let outcomes: Vec<&SamplerOutcome> = results.iter().flatten().map(|r| &r.outcomes[s]).collect();
                CellReport::new(
                    *fraction,
                    spec.kind,
                    sampler,
                    seed,
                    failures,
                    outcomes.iter().map(|o| o.sq_error_mean).collect(),
                    outcomes.iter().map(|o| o.sq_error_variance).collect(),
                )
            })
            .collect::<Vec<_>>();
        for c in &cells {
            log::info!(
                "{} {} {}: mse mean {:.4e}, mse variance {:.4e} ({} reps, {} failed)",
                c.fraction,
                c.model,
                c.sampler,
                c.mse_mean,
                c.mse_variance,
                c.repetitions,
                c.failures
            );
        }
        Ok(cells)
    }

    /// Every fraction × model × sampler combination.
    pub fn run_grid(
        &self,
        specs: &[ModelSpec],
        fractions: &[FractionVector],
        samplers: &[SamplerKind],
        reps: usize,
        seed: u64,
    ) -> Result<ExperimentReport, ExperimentError> {
        for f in fractions {
            f.check_feasible(self.pop.len(), self.pop.dim())?;
        }
        let mut cells = Vec::new();
        for f in fractions {
            for spec in specs {
                cells.extend(self.run_cell(f, spec, samplers, reps, seed)?);
            }
        }
        Ok(ExperimentReport {
            seed,
            reps,
            population_size: self.pop.len(),
            true_mean: self.pop.true_mean(),
            true_variance: self.pop.true_variance(),
            cells,
        })
    }
}

fn is_fit_failure(e: &ExperimentError) -> bool {
    matches!(e, ExperimentError::Model(_) | ExperimentError::Sampler(SamplerError::Model(_)))
}
