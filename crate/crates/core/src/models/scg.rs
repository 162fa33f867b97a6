//! Møller's scaled conjugate gradient.
//!
//! Curvature along the search direction is estimated from a finite
//! difference of gradients, and a Levenberg–Marquardt style scale `λ` keeps
//! the local quadratic model positive-definite. No line search is needed.

use super::ModelError;

pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, theta: &[f64]) -> f64;

    /// Writes the gradient into `grad` and returns the objective value.
    fn value_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScgConfig {
    pub max_iters: usize,
    /// Convergence when `‖∇‖∞` falls to this value.
    pub grad_tol: f64,
    /// Base step for the curvature probe (σ₀ in Møller's notation).
    pub sigma0: f64,
}

impl Default for ScgConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            grad_tol: 1e-5,
            sigma0: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScgOutcome {
    pub theta: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const LAMBDA_MIN: f64 = 1e-15;
const LAMBDA_MAX: f64 = 1e100;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn scg_minimize<O: Objective + ?Sized>(
    obj: &O,
    start: Vec<f64>,
    cfg: &ScgConfig,
) -> Result<ScgOutcome, ModelError> {
    let q = obj.dim();
    let mut x = start;
    let mut grad = vec![0.0; q];
    let mut f_old = obj.value_and_gradient(&x, &mut grad);
    if !f_old.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(ModelError::NonFiniteLoss { iteration: 0 });
    }
    let mut grad_old = grad.clone();
    let mut d: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut lambda = 1.0;
    let mut success = true;
    let mut n_success = 0usize;

    let mut x_probe = vec![0.0; q];
    let mut g_probe = vec![0.0; q];
    let mut x_new = vec![0.0; q];
    let (mut mu, mut kappa, mut gamma) = (0.0, 0.0, 0.0);

    let mut iter = 0;
    while iter < cfg.max_iters {
        if inf_norm(&grad) <= cfg.grad_tol {
            return Ok(ScgOutcome {
                grad_inf_norm: inf_norm(&grad),
                theta: x,
                value: f_old,
                iterations: iter,
                converged: true,
            });
        }
        iter += 1;

        if success {
            mu = dot(&d, &grad);
            if mu >= 0.0 {
                d.iter_mut().zip(&grad).for_each(|(di, g)| *di = -g);
                mu = dot(&d, &grad);
            }
            kappa = dot(&d, &d);
            if kappa < f64::EPSILON {
                break;
            }
            let sigma = cfg.sigma0 / kappa.sqrt();
            for i in 0..q {
                x_probe[i] = x[i] + sigma * d[i];
            }
            obj.value_and_gradient(&x_probe, &mut g_probe);
            gamma = g_probe.iter().zip(&grad).zip(&d).map(|((gp, g), di)| di * (gp - g)).sum::<f64>() / sigma;
        }

        // scaled curvature; force it positive by raising lambda
        let mut delta = gamma + lambda * kappa;
        if delta <= 0.0 {
            delta = lambda * kappa;
            lambda -= gamma / kappa;
        }
        let step = -mu / delta;
        for i in 0..q {
            x_new[i] = x[i] + step * d[i];
        }
        let f_new = obj.value(&x_new);
        if !f_new.is_finite() {
            return Err(ModelError::NonFiniteLoss { iteration: iter });
        }
        let comparison = 2.0 * (f_new - f_old) / (step * mu);
        success = comparison >= 0.0;
        if success {
            n_success += 1;
            std::mem::swap(&mut x, &mut x_new);
            f_old = f_new;
            grad_old.copy_from_slice(&grad);
            obj.value_and_gradient(&x, &mut grad);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(ModelError::NonFiniteLoss { iteration: iter });
            }
        }

        if comparison < 0.25 {
            lambda = (4.0 * lambda).min(LAMBDA_MAX);
        }
        if comparison > 0.75 {
            lambda = (0.5 * lambda).max(LAMBDA_MIN);
        }

        if n_success == q {
            d.iter_mut().zip(&grad).for_each(|(di, g)| *di = -g);
            n_success = 0;
        } else if success {
            let beta = grad_old.iter().zip(&grad).map(|(go, g)| (go - g) * g).sum::<f64>() / mu;
            d.iter_mut().zip(&grad).for_each(|(di, g)| *di = beta * *di - g);
        }
    }
    let grad_inf_norm = inf_norm(&grad);
    Ok(ScgOutcome {
        converged: grad_inf_norm <= cfg.grad_tol,
        grad_inf_norm,
        theta: x,
        value: f_old,
        iterations: iter,
    })
}
