//! Grid search over `(α, β)`: leave-one-out for the linear model, k-fold for
//! anything that has to be retrained.

use std::collections::HashMap;

use nalgebra::Cholesky;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::linear::{add_slope_penalty, normal_equations};
use super::mlp::{fit_mlp, MlpLayout, TrainConfig};
use super::{Hyperparams, ModelError, PredictiveModel, TrainingSet};
use crate::seeds;

/// Relative tolerance under which two CV scores count as tied.
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridScore {
    pub hyper: Hyperparams,
    pub score: f64,
}

/// `α ∈ {1e-3, …, 1e2}` × `β ∈ {1e-2, …, 1e2}`.
pub fn default_grid() -> Vec<Hyperparams> {
    let alphas = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2];
    let betas = [1e-2, 1e-1, 1.0, 1e1, 1e2];
    alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| Hyperparams { alpha: a, beta: b }))
        .collect()
}

/// Lowest score wins; near-ties go to the larger `α`, then the larger `β`.
pub fn select_best(scores: &[GridScore]) -> Result<Hyperparams, ModelError> {
    let mut best: Option<GridScore> = None;
    for s in scores {
        best = match best {
            None => Some(*s),
            Some(b) => {
                let scale = b.score.abs().max(s.score.abs());
                let tied = (s.score - b.score).abs() <= TIE_TOLERANCE * scale;
                let smoother = (s.hyper.alpha, s.hyper.beta) > (b.hyper.alpha, b.hyper.beta);
                if (tied && smoother) || (!tied && s.score < b.score) {
                    Some(*s)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.map(|b| b.hyper).ok_or(ModelError::EmptyGrid)
}

/// Leave-one-out residuals of the ridge mean prediction, from a single fit:
/// `eᵢ / (1 − hᵢᵢ)` with `H = X (XᵀX + (α/β)·B)⁻¹ Xᵀ`.
pub fn loo_errors(data: &TrainingSet, hyper: Hyperparams) -> Result<Vec<f64>, ModelError> {
    let (mut system, rhs) = normal_equations(data);
    add_slope_penalty(&mut system, hyper.ratio());
    let chol = Cholesky::new(system).ok_or(ModelError::NotPositiveDefinite { jitter: 0.0 })?;
    let theta = chol.solve(&rhs);
    let p = data.dim() + 1;
    let mut aug = nalgebra::DVector::from_element(p, 1.0);
    Ok(data
        .rows()
        .map(|(x, y)| {
            aug.rows_mut(1, p - 1).copy_from_slice(x);
            let leverage = aug.dot(&chol.solve(&aug));
            let resid = y - aug.dot(&theta);
            resid / (1.0 - leverage)
        })
        .collect())
}

/// Grid pair minimizing the mean squared leave-one-out error.
pub fn loocv_select(data: &TrainingSet, grid: &[Hyperparams]) -> Result<Hyperparams, ModelError> {
    if grid.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    if data.len() < 3 {
        return Err(ModelError::TooFewPoints {
            needed: 3,
            got: data.len(),
        });
    }
    let scores = grid
        .iter()
        .map(|&h| {
            let h = Hyperparams::new(h.alpha, h.beta)?;
            let errs = loo_errors(data, h)?;
            let score = errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64;
            Ok(GridScore { hyper: h, score })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    select_best(&scores)
}

fn ratio_key(h: &Hyperparams) -> String {
    format!("{:.9e}", h.ratio())
}

/// K-fold CV over the grid; fold of row `i` is `i % folds`.
///
/// Mean predictions of the models here depend on `(α, β)` only through
/// `α/β`, so pairs sharing a ratio are scored once.
pub fn kfold_select<M, F>(
    data: &TrainingSet,
    grid: &[Hyperparams],
    folds: usize,
    mut fit: F,
) -> Result<Hyperparams, ModelError>
where
    M: PredictiveModel,
    F: FnMut(&TrainingSet, Hyperparams, usize) -> Result<M, ModelError>,
{
    if grid.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    if folds < 2 || data.len() < folds {
        return Err(ModelError::TooFewPoints {
            needed: folds.max(2),
            got: data.len(),
        });
    }
    let split: Vec<(Vec<usize>, Vec<usize>)> = (0..folds)
        .map(|k| (0..data.len()).partition(|i| i % folds != k))
        .collect();
    let mut cache: HashMap<String, f64> = HashMap::new();
    let mut scores = Vec::with_capacity(grid.len());
    for &h in grid {
        let h = Hyperparams::new(h.alpha, h.beta)?;
        let key = ratio_key(&h);
        let score = match cache.get(&key) {
            Some(s) => *s,
            None => {
                let mut sse = 0.0;
                for (k, (train, test)) in split.iter().enumerate() {
                    let model = fit(&data.select(train), h, k)?;
                    for &i in test {
                        let e = model.predict_mean(data.row(i))? - data.targets()[i];
                        sse += e * e;
                    }
                }
                let s = sse / data.len() as f64;
                cache.insert(key, s);
                s
            }
        };
        scores.push(GridScore { hyper: h, score });
    }
    select_best(&scores)
}

/// K-fold selection for the MLP. Every fold fit draws its initial weights
/// from a stream seeded by `(seed, fold)`.
pub fn mlp_cv_select(
    data: &TrainingSet,
    layout: MlpLayout,
    grid: &[Hyperparams],
    config: &TrainConfig,
    folds: usize,
    seed: u64,
) -> Result<Hyperparams, ModelError> {
    kfold_select(data, grid, folds, |train, h, k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(&[seed, k as u64]));
        fit_mlp(train, layout, h, config, &mut rng)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fit_linear;

    fn noiseless(n: usize) -> TrainingSet {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / 4.0 - 1.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0]).collect();
        TrainingSet::new(&rows, &y).unwrap()
    }

    #[test]
    fn singleton_grid() {
        let h = Hyperparams::new(0.5, 3.0).unwrap();
        assert_eq!(loocv_select(&noiseless(10), &[h]).unwrap(), h);
    }

    #[test]
    fn noiseless_prefers_little_shrinkage() {
        let grid = [Hyperparams::new(1e-6, 1.0).unwrap(), Hyperparams::new(1e3, 1.0).unwrap()];
        assert_eq!(loocv_select(&noiseless(12), &grid).unwrap().alpha, 1e-6);
    }

    #[test]
    fn ties_prefer_larger_alpha_then_beta() {
        let s = |a, b, score| GridScore {
            hyper: Hyperparams { alpha: a, beta: b },
            score,
        };
        let best = select_best(&[s(1.0, 1.0, 2.0), s(10.0, 10.0, 2.0), s(10.0, 1.0, 2.0), s(0.1, 5.0, 3.0)]).unwrap();
        assert_eq!(best, Hyperparams { alpha: 10.0, beta: 10.0 });
        assert_eq!(select_best(&[]), Err(ModelError::EmptyGrid));
    }

    #[test]
    fn errors() {
        assert_eq!(loocv_select(&noiseless(5), &[]), Err(ModelError::EmptyGrid));
        let h = Hyperparams::new(1.0, 1.0).unwrap();
        assert!(matches!(loocv_select(&noiseless(2), &[h]), Err(ModelError::TooFewPoints { .. })));
    }

    #[test]
    fn kfold_with_linear_model_prefers_small_shrinkage() {
        let grid = [Hyperparams::new(1e-6, 1.0).unwrap(), Hyperparams::new(1e3, 1.0).unwrap()];
        let best = kfold_select(&noiseless(12), &grid, 3, |d, h, _| fit_linear(d, h)).unwrap();
        assert_eq!(best.alpha, 1e-6);
    }

    #[test]
    fn kfold_scores_each_ratio_once() {
        let grid = [
            Hyperparams::new(1.0, 1.0).unwrap(),
            Hyperparams::new(10.0, 10.0).unwrap(),
            Hyperparams::new(2.0, 1.0).unwrap(),
        ];
        let mut calls = 0;
        kfold_select(&noiseless(9), &grid, 3, |d, h, _| {
            calls += 1;
            fit_linear(d, h)
        })
        .unwrap();
        assert_eq!(calls, 2 * 3);
    }

    #[test]
    fn default_grid_shape() {
        let g = default_grid();
        assert_eq!(g.len(), 30);
        assert!(g.iter().all(|h| h.alpha > 0.0 && h.beta > 0.0));
    }
}
