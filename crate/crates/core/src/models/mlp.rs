use std::sync::Once;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::linalg::{factor_with_jitter, FactoredSpd};
use super::scg::{scg_minimize, Objective, ScgConfig};
use super::{Hyperparams, ModelError, PredictiveDistribution, PredictiveModel, TrainingSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Identity => a,
        }
    }

    /// Derivative expressed through the activation output `h`.
    fn slope(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Identity => 1.0,
        }
    }
}

/// One hidden layer of `hidden` units and a single identity output.
///
/// `hidden == 0` drops the hidden layer entirely, leaving the linear map
/// `wᵀx + b`. Parameters are flattened as input-to-hidden weights (row per
/// hidden unit), hidden biases, hidden-to-output weights, output bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpLayout {
    pub inputs: usize,
    pub hidden: usize,
    pub activation: Activation,
}

impl MlpLayout {
    pub fn new(inputs: usize, hidden: usize) -> Self {
        Self {
            inputs,
            hidden,
            activation: Activation::Tanh,
        }
    }

    /// Linear special case, no hidden layer.
    pub fn linear(inputs: usize) -> Self {
        Self {
            inputs,
            hidden: 0,
            activation: Activation::Identity,
        }
    }

    /// Parameter count `q`.
    pub fn num_params(&self) -> usize {
        if self.hidden == 0 {
            self.inputs + 1
        } else {
            self.hidden * self.inputs + 2 * self.hidden + 1
        }
    }

    pub fn output_bias_index(&self) -> usize {
        self.num_params() - 1
    }

    /// Indices of the hidden-to-output weights.
    pub fn output_weight_range(&self) -> std::ops::Range<usize> {
        let start = self.hidden * self.inputs + self.hidden;
        start..start + self.hidden
    }

    /// Forward pass; fills `hidden_out` (length `hidden`) and returns `f(x)`.
    fn forward(&self, theta: &[f64], x: &[f64], hidden_out: &mut [f64]) -> f64 {
        let m = self.inputs;
        let h = self.hidden;
        if h == 0 {
            return theta[m] + x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
        }
        let (w1, rest) = theta.split_at(h * m);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let mut out = b2[0];
        for j in 0..h {
            let a = b1[j] + w1[j * m..(j + 1) * m].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            let z = self.activation.apply(a);
            hidden_out[j] = z;
            out += w2[j] * z;
        }
        out
    }

    /// Accumulates `scale · ∂f/∂θ` into `grad` given the forward state.
    fn backward(&self, theta: &[f64], x: &[f64], hidden_out: &[f64], scale: f64, grad: &mut [f64]) {
        let m = self.inputs;
        let h = self.hidden;
        if h == 0 {
            for (g, v) in grad[..m].iter_mut().zip(x) {
                *g += scale * v;
            }
            grad[m] += scale;
            return;
        }
        let w2 = &theta[h * m + h..h * m + 2 * h];
        for j in 0..h {
            let z = hidden_out[j];
            grad[h * m + h + j] += scale * z;
            let delta = scale * w2[j] * self.activation.slope(z);
            grad[h * m + j] += delta;
            for (g, v) in grad[j * m..(j + 1) * m].iter_mut().zip(x) {
                *g += delta * v;
            }
        }
        grad[h * m + 2 * h] += scale;
    }

    pub fn output(&self, theta: &[f64], x: &[f64]) -> f64 {
        let mut hidden = vec![0.0; self.hidden];
        self.forward(theta, x, &mut hidden)
    }

    /// `∂f(x; θ)/∂θ`.
    pub fn output_gradient(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let mut hidden = vec![0.0; self.hidden];
        let mut grad = vec![0.0; self.num_params()];
        self.forward(theta, x, &mut hidden);
        self.backward(theta, x, &hidden, 1.0, &mut grad);
        grad
    }

    fn random_init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let q = self.num_params();
        let first = self.hidden * self.inputs + self.hidden;
        let s_in = 1.0 / ((self.inputs + 1) as f64).sqrt();
        let s_out = 1.0 / ((self.hidden + 1) as f64).sqrt();
        (0..q)
            .map(|i| {
                let z: f64 = rng.sample(StandardNormal);
                if self.hidden == 0 || i < first {
                    z * s_in
                } else {
                    z * s_out
                }
            })
            .collect()
    }
}

/// `S(θ) = β/2 Σ (yᵢ − f(xᵢ; θ))² + α/2 Σ θⱼ²`, all weights penalized.
pub struct MlpObjective<'a> {
    pub data: &'a TrainingSet,
    pub layout: MlpLayout,
    pub alpha: f64,
    pub beta: f64,
}

impl Objective for MlpObjective<'_> {
    fn dim(&self) -> usize {
        self.layout.num_params()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let mut hidden = vec![0.0; self.layout.hidden];
        let sse: f64 = self
            .data
            .rows()
            .map(|(x, y)| {
                let r = self.layout.forward(theta, x, &mut hidden) - y;
                r * r
            })
            .sum();
        0.5 * self.beta * sse + 0.5 * self.alpha * theta.iter().map(|t| t * t).sum::<f64>()
    }

    fn value_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let mut hidden = vec![0.0; self.layout.hidden];
        for (g, t) in grad.iter_mut().zip(theta) {
            *g = self.alpha * t;
        }
        let mut sse = 0.0;
        for (x, y) in self.data.rows() {
            let r = self.layout.forward(theta, x, &mut hidden) - y;
            sse += r * r;
            self.layout.backward(theta, x, &hidden, self.beta * r, grad);
        }
        0.5 * self.beta * sse + 0.5 * self.alpha * theta.iter().map(|t| t * t).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub restarts: usize,
    pub scg: ScgConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            restarts: 3,
            scg: ScgConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MlpModel {
    layout: MlpLayout,
    theta: Vec<f64>,
    hyper: Hyperparams,
    hessian: FactoredSpd,
    objective: f64,
    grad_inf_norm: f64,
    iterations: usize,
}

/// Gauss–Newton form `β Σ g(xₙ) g(xₙ)ᵀ + α I`. `β = 0` is allowed here so the
/// prior-only Hessian can be inspected.
pub fn gauss_newton_hessian(
    layout: &MlpLayout,
    theta: &[f64],
    data: &TrainingSet,
    alpha: f64,
    beta: f64,
) -> DMatrix<f64> {
    let q = layout.num_params();
    let rows: Vec<f64> = data.rows().flat_map(|(x, _)| layout.output_gradient(theta, x)).collect();
    let g = DMatrix::from_row_slice(data.len(), q, &rows);
    let mut a = g.tr_mul(&g) * beta;
    for i in 0..q {
        a[(i, i)] += alpha;
    }
    a
}

/// Laplace Hessian of a trained model on `data`.
pub fn laplace_hessian(model: &MlpModel, data: &TrainingSet) -> DMatrix<f64> {
    gauss_newton_hessian(&model.layout, &model.theta, data, model.hyper.alpha, model.hyper.beta)
}

pub fn mlp_gradient(model: &MlpModel, x: &[f64]) -> Vec<f64> {
    model.layout.output_gradient(&model.theta, x)
}

fn check_layout(layout: &MlpLayout, data: &TrainingSet) -> Result<(), ModelError> {
    if layout.inputs != data.dim() {
        return Err(ModelError::DimensionMismatch {
            expected: layout.inputs,
            got: data.dim(),
        });
    }
    if layout.hidden > 0 && layout.activation == Activation::Identity {
        // allowed, but the model is then linear with redundant weights
        log::debug!("identity hidden activation");
    }
    Ok(())
}

static SMALL_DATA_WARNING: Once = Once::new();

/// Trains with scaled conjugate gradient from `config.restarts` random
/// starts and keeps the lowest final objective.
pub fn fit_mlp<R: Rng + ?Sized>(
    data: &TrainingSet,
    layout: MlpLayout,
    hyper: Hyperparams,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<MlpModel, ModelError> {
    let hyper = Hyperparams::new(hyper.alpha, hyper.beta)?;
    check_layout(&layout, data)?;
    if data.len() < 2 {
        return Err(ModelError::TooFewPoints {
            needed: 2,
            got: data.len(),
        });
    }
    if config.restarts == 0 {
        return Err(ModelError::BadLayout("at least one restart is required".into()));
    }
    let q = layout.num_params();
    if 2 * data.len() < q {
        SMALL_DATA_WARNING.call_once(|| {
            log::warn!("MLP with {q} parameters trained on {} points", data.len());
        });
    }
    // S/β has the same minimizer and depends on (α, β) only through α/β
    let objective = MlpObjective {
        data,
        layout,
        alpha: hyper.ratio(),
        beta: 1.0,
    };
    let mut best: Option<super::ScgOutcome> = None;
    let mut first_err = None;
    for _ in 0..config.restarts {
        let start = layout.random_init(rng);
        match scg_minimize(&objective, start, &config.scg) {
            Ok(out) => {
                if best.as_ref().is_none_or(|b| out.value < b.value) {
                    best = Some(out);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let best = match best {
        Some(b) => b,
        None => return Err(first_err.expect("restarts > 0")),
    };
    let a = gauss_newton_hessian(&layout, &best.theta, data, hyper.alpha, hyper.beta);
    Ok(MlpModel {
        layout,
        objective: best.value * hyper.beta,
        grad_inf_norm: best.grad_inf_norm,
        iterations: best.iterations,
        theta: best.theta,
        hyper,
        hessian: factor_with_jitter(a)?,
    })
}

impl MlpModel {
    /// Model with fixed weights whose Hessian is built on `data`.
    pub fn from_parts(
        layout: MlpLayout,
        theta: Vec<f64>,
        hyper: Hyperparams,
        data: &TrainingSet,
    ) -> Result<Self, ModelError> {
        check_layout(&layout, data)?;
        if theta.len() != layout.num_params() {
            return Err(ModelError::DimensionMismatch {
                expected: layout.num_params(),
                got: theta.len(),
            });
        }
        let obj = MlpObjective {
            data,
            layout,
            alpha: hyper.alpha,
            beta: hyper.beta,
        };
        let mut grad = vec![0.0; theta.len()];
        let objective = obj.value_and_gradient(&theta, &mut grad);
        let a = gauss_newton_hessian(&layout, &theta, data, hyper.alpha, hyper.beta);
        Ok(Self {
            layout,
            grad_inf_norm: grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) / hyper.beta,
            objective,
            iterations: 0,
            theta,
            hyper,
            hessian: factor_with_jitter(a)?,
        })
    }

    /// Same weights, Hessian rebuilt on `data`.
    pub fn with_hessian_from(&self, data: &TrainingSet) -> Result<Self, ModelError> {
        let mut out = Self::from_parts(self.layout, self.theta.clone(), self.hyper, data)?;
        out.iterations = self.iterations;
        Ok(out)
    }

    pub fn layout(&self) -> &MlpLayout {
        &self.layout
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

    /// Final `S(θ)`.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// `‖∇(S/β)‖∞` at the returned weights.
    pub fn grad_inf_norm(&self) -> f64 {
        self.grad_inf_norm
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn dump(&self) -> serde_json::Value {
        json!({
            "model": "mlp",
            "alpha": self.hyper.alpha,
            "beta": self.hyper.beta,
            "layout": self.layout,
            "theta": self.theta,
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.layout.inputs {
            return Err(ModelError::DimensionMismatch {
                expected: self.layout.inputs,
                got: x.len(),
            });
        }
        Ok(())
    }
}

impl PredictiveModel for MlpModel {
    fn dim(&self) -> usize {
        self.layout.inputs
    }

    fn hyperparams(&self) -> Hyperparams {
        self.hyper
    }

    fn predict(&self, x: &[f64]) -> Result<PredictiveDistribution, ModelError> {
        self.check_dim(x)?;
        let g = self.layout.output_gradient(&self.theta, x);
        Ok(PredictiveDistribution {
            mean: self.layout.output(&self.theta, x),
            variance: 1.0 / self.hyper.beta + self.hessian.quad_form_inv(&g),
        })
    }

    fn predict_mean(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check_dim(x)?;
        Ok(self.layout.output(&self.theta, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize, m: usize, seed: u64) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v.sin()).sum()).collect();
        TrainingSet::new(&rows, &y).unwrap()
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(MlpLayout::new(2, 3).num_params(), 13);
        assert_eq!(MlpLayout::new(10, 8).num_params(), 97);
        assert_eq!(MlpLayout::linear(3).num_params(), 4);
        assert_eq!(MlpLayout::new(2, 3).output_weight_range(), 9..12);
    }

    #[test]
    fn output_bias_gradient_is_one() {
        let layout = MlpLayout::new(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let theta = layout.random_init(&mut rng);
        for x in [[0.0, 0.0, 0.0], [1.0, -2.0, 3.0], [10.0, 0.5, -7.0]] {
            assert_eq!(layout.output_gradient(&theta, &x)[layout.output_bias_index()], 1.0);
        }
    }

    #[test]
    fn zero_weights_give_zero_output_weight_gradient() {
        let layout = MlpLayout::new(2, 5);
        let theta = vec![0.0; layout.num_params()];
        let g = layout.output_gradient(&theta, &[0.7, -1.3]);
        for i in layout.output_weight_range() {
            assert_eq!(g[i], 0.0);
        }
        assert_eq!(layout.output(&theta, &[0.7, -1.3]), 0.0);
    }

    #[test]
    fn prior_only_hessian_is_identity() {
        let layout = MlpLayout::new(2, 3);
        let data = toy(10, 2, 4);
        let theta = layout.random_init(&mut ChaCha8Rng::seed_from_u64(2));
        let a = gauss_newton_hessian(&layout, &theta, &data, 1.0, 0.0);
        assert_eq!(a, DMatrix::identity(13, 13));
    }

    #[test]
    fn training_reduces_objective_and_is_seeded() {
        let data = toy(40, 2, 9);
        let layout = MlpLayout::new(2, 4);
        let hyper = Hyperparams::new(0.01, 10.0).unwrap();
        let cfg = TrainConfig::default();
        let a = fit_mlp(&data, layout, hyper, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = fit_mlp(&data, layout, hyper, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a.theta(), b.theta());
        let zero = MlpObjective { data: &data, layout, alpha: 0.01, beta: 10.0 }.value(&[0.0; 17]);
        assert!(a.objective() < zero);
        assert!(a.factored_hessian().pivots().iter().all(|p| *p > 0.0));
    }

    #[test]
    fn scalar_variance() {
        // q = 1: a constant model f = b
        let layout = MlpLayout::linear(0);
        let data = TrainingSet::new(&[vec![], vec![], vec![]], &[1.0, 2.0, 3.0]).unwrap();
        let hyper = Hyperparams::new(2.0, 0.5).unwrap();
        let model = MlpModel::from_parts(layout, vec![1.5], hyper, &data).unwrap();
        // A = β·n + α = 1.5 + 2 = 3.5, g = 1
        let expected = 1.0 / 0.5 + 1.0 / 3.5;
        assert!((model.predict(&[]).unwrap().variance - expected).abs() < 1e-15);
    }

    #[test]
    fn dimension_checks() {
        let data = toy(10, 2, 1);
        let hyper = Hyperparams::new(1.0, 1.0).unwrap();
        let err = fit_mlp(&data, MlpLayout::new(3, 2), hyper, &TrainConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(ModelError::DimensionMismatch { .. })));
        let model = MlpModel::from_parts(MlpLayout::new(2, 2), vec![0.1; 9], hyper, &data).unwrap();
        assert!(model.predict(&[1.0]).is_err());
    }
}
