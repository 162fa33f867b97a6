//! Bayesian prediction models with Laplace-approximated predictive variance
//! `σ²(x) = 1/β + g(x)ᵀ A⁻¹ g(x)`.

mod linalg;
mod linear;
mod mlp;
mod scg;
mod selection;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{IndexSet, Population};

pub use linalg::{factor_with_jitter, quad_form_inv, FactoredSpd};
pub use linear::{fit_linear, linear_objective, BayesLinearModel};
pub use mlp::{
    fit_mlp, gauss_newton_hessian, laplace_hessian, mlp_gradient, Activation, MlpLayout, MlpModel,
    MlpObjective, TrainConfig,
};
pub use scg::{scg_minimize, Objective, ScgConfig, ScgOutcome};
pub use selection::{
    default_grid, kfold_select, loo_errors, loocv_select, mlp_cv_select, select_best, GridScore,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("hyperparameters must be positive and finite (alpha = {alpha}, beta = {beta})")]
    BadHyperparams { alpha: f64, beta: f64 },
    #[error("need at least {needed} training points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("all training inputs are identical")]
    DegenerateInputs,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not positive-definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("non-finite training data")]
    NonFiniteData,
    #[error("invalid layout: {0}")]
    BadLayout(String),
}

/// Weight-prior precision `alpha` and noise precision `beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha: f64,
    pub beta: f64,
}

impl Hyperparams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ModelError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(alpha) && ok(beta) {
            Ok(Self { alpha, beta })
        } else {
            Err(ModelError::BadHyperparams { alpha, beta })
        }
    }

    /// Shrinkage ratio `alpha / beta`; the MAP weights depend on nothing else.
    pub fn ratio(&self) -> f64 {
        self.alpha / self.beta
    }
}

/// Gaussian predictive distribution of `y` at one input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub mean: f64,
    pub variance: f64,
}

/// Common contract of fitted models.
pub trait PredictiveModel: Send + Sync {
    /// Input dimensionality `m`.
    fn dim(&self) -> usize;

    fn hyperparams(&self) -> Hyperparams;

    fn predict(&self, x: &[f64]) -> Result<PredictiveDistribution, ModelError>;

    fn predict_mean(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.predict(x).map(|p| p.mean)
    }
}

/// Row-major design matrix and targets.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    x: Vec<f64>,
    y: Vec<f64>,
    m: usize,
}

impl TrainingSet {
    pub fn new(rows: &[Vec<f64>], y: &[f64]) -> Result<Self, ModelError> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.len() != y.len() {
            return Err(ModelError::DimensionMismatch {
                expected: rows.len(),
                got: y.len(),
            });
        }
        let mut x = Vec::with_capacity(rows.len() * m);
        for r in rows {
            if r.len() != m {
                return Err(ModelError::DimensionMismatch {
                    expected: m,
                    got: r.len(),
                });
            }
            x.extend_from_slice(r);
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteData);
        }
        Ok(Self { x, y: y.to_vec(), m })
    }

    pub fn from_population(pop: &Population, ids: &IndexSet) -> Self {
        let m = pop.dim();
        let mut x = Vec::with_capacity(ids.len() * m);
        let mut y = Vec::with_capacity(ids.len());
        for id in ids.iter() {
            let p = pop.point(id);
            x.extend_from_slice(&p.x);
            y.push(p.y);
        }
        Self { x, y, m }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.m..(i + 1) * self.m]
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    /// Same inputs with every target passed through `f`.
    pub fn map_targets(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            x: self.x.clone(),
            y: self.y.iter().map(|&v| f(v)).collect(),
            m: self.m,
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.y.len()).map(move |i| (self.row(i), self.y[i]))
    }

    /// Subset by row positions, in the given order.
    pub fn select(&self, positions: &[usize]) -> Self {
        let mut x = Vec::with_capacity(positions.len() * self.m);
        let mut y = Vec::with_capacity(positions.len());
        for &i in positions {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Self { x, y, m: self.m }
    }

    /// Copy with one extra row appended.
    pub fn with_row(&self, row: &[f64], y: f64) -> Self {
        let mut out = self.clone();
        out.x.extend_from_slice(row);
        out.y.push(y);
        out
    }
}
