use nalgebra::{DMatrix, DVector};
use serde_json::json;

use super::linalg::{factor_with_jitter, FactoredSpd};
use super::{Hyperparams, ModelError, PredictiveDistribution, PredictiveModel, TrainingSet};

/// Ridge regression with an unpenalized bias, read as a Bayesian linear model.
///
/// Parameters are ordered `(θ₀, θ₁, …, θₘ)`; the Hessian of the regularized
/// loss is `A = β XᵀX + α·blockdiag(0, Iₘ)` where `X` carries a leading
/// column of ones.
#[derive(Clone, Debug)]
pub struct BayesLinearModel {
    theta: Vec<f64>,
    hessian: FactoredSpd,
    hyper: Hyperparams,
}

/// Gram matrix `XᵀX` and moment `Xᵀy` of the augmented design `(1, x)`.
pub(super) fn normal_equations(data: &TrainingSet) -> (DMatrix<f64>, DVector<f64>) {
    let p = data.dim() + 1;
    let mut gram = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    let mut aug = vec![1.0; p];
    for (row, y) in data.rows() {
        aug[1..].copy_from_slice(row);
        for i in 0..p {
            rhs[i] += aug[i] * y;
            for j in 0..=i {
                gram[(i, j)] += aug[i] * aug[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[(j, i)] = gram[(i, j)];
        }
    }
    (gram, rhs)
}

pub(super) fn add_slope_penalty(m: &mut DMatrix<f64>, penalty: f64) {
    for i in 1..m.nrows() {
        m[(i, i)] += penalty;
    }
}

/// Closed-form MAP weights and Hessian.
pub fn fit_linear(data: &TrainingSet, hyper: Hyperparams) -> Result<BayesLinearModel, ModelError> {
    let hyper = Hyperparams::new(hyper.alpha, hyper.beta)?;
    if data.len() < 2 {
        return Err(ModelError::TooFewPoints {
            needed: 2,
            got: data.len(),
        });
    }
    let first = data.row(0);
    if (1..data.len()).all(|i| data.row(i) == first) {
        return Err(ModelError::DegenerateInputs);
    }
    let (gram, rhs) = normal_equations(data);

    let mut system = gram.clone();
    add_slope_penalty(&mut system, hyper.ratio());
    let system = nalgebra::Cholesky::new(system).ok_or(ModelError::NotPositiveDefinite { jitter: 0.0 })?;
    let theta = system.solve(&rhs);

    let mut a = gram * hyper.beta;
    add_slope_penalty(&mut a, hyper.alpha);
    let hessian = factor_with_jitter(a)?;
    Ok(BayesLinearModel {
        theta: theta.iter().copied().collect(),
        hessian,
        hyper,
    })
}

/// `S(θ) = β/2 Σ (yᵢ − θ₀ − θᵀxᵢ)² + α/2 Σⱼ≥1 θⱼ²` and its gradient.
pub fn linear_objective(data: &TrainingSet, hyper: Hyperparams, theta: &[f64]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; theta.len()];
    let mut s = 0.0;
    for (row, y) in data.rows() {
        let pred = theta[0] + row.iter().zip(&theta[1..]).map(|(a, b)| a * b).sum::<f64>();
        let r = pred - y;
        s += 0.5 * hyper.beta * r * r;
        grad[0] += hyper.beta * r;
        for (g, x) in grad[1..].iter_mut().zip(row) {
            *g += hyper.beta * r * x;
        }
    }
    for j in 1..theta.len() {
        s += 0.5 * hyper.alpha * theta[j] * theta[j];
        grad[j] += hyper.alpha * theta[j];
    }
    (s, grad)
}

impl BayesLinearModel {
    /// Assembles a model from explicit weights and Hessian.
    pub fn from_parts(theta: Vec<f64>, hessian: DMatrix<f64>, hyper: Hyperparams) -> Result<Self, ModelError> {
        if hessian.nrows() != theta.len() || hessian.ncols() != theta.len() {
            return Err(ModelError::DimensionMismatch {
                expected: theta.len(),
                got: hessian.nrows(),
            });
        }
        Ok(Self {
            theta,
            hessian: factor_with_jitter(hessian)?,
            hyper,
        })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian.matrix
    }

    pub fn factored_hessian(&self) -> &FactoredSpd {
        &self.hessian
    }

    /// Gradient of the prediction w.r.t. the weights: `(1, x)`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        std::iter::once(1.0).chain(x.iter().copied()).collect()
    }

    pub fn dump(&self) -> serde_json::Value {
        json!({
            "model": "rls",
            "alpha": self.hyper.alpha,
            "beta": self.hyper.beta,
            "theta": self.theta,
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() + 1 != self.theta.len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.theta.len() - 1,
                got: x.len(),
            });
        }
        Ok(())
    }
}

impl PredictiveModel for BayesLinearModel {
    fn dim(&self) -> usize {
        self.theta.len() - 1
    }

    fn hyperparams(&self) -> Hyperparams {
        self.hyper
    }

    fn predict(&self, x: &[f64]) -> Result<PredictiveDistribution, ModelError> {
        self.check_dim(x)?;
        let g = self.gradient(x);
        let mean = g.iter().zip(&self.theta).map(|(a, b)| a * b).sum();
        let variance = 1.0 / self.hyper.beta + self.hessian.quad_form_inv(&g);
        Ok(PredictiveDistribution { mean, variance })
    }

    fn predict_mean(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check_dim(x)?;
        Ok(self.theta[0] + x.iter().zip(&self.theta[1..]).map(|(a, b)| a * b).sum::<f64>())
    }
}
