//! Bayesian maximum variance inclusion.
//!
//! The predictive distribution is computed once from the prior-fitted model;
//! the `k` candidates with the largest predictive variance are taken, ties
//! going to the lower id.

use std::cmp::Ordering;

use rayon::prelude::*;

use super::{check_size, SampleSet, SamplerError, SamplerKind};
use crate::dataset::{IndexSet, Population};
use crate::models::PredictiveModel;

/// `(id, σ²(x))` for every candidate, in candidate order.
pub fn bmvi_scores<M: PredictiveModel + ?Sized>(
    candidates: &IndexSet,
    pop: &Population,
    model: &M,
) -> Result<Vec<(usize, f64)>, SamplerError> {
    candidates
        .ids()
        .par_iter()
        .map(|&id| Ok((id, model.predict(&pop.point(id).x)?.variance)))
        .collect()
}

pub fn bmvi_sample<M: PredictiveModel + ?Sized>(
    prior: &IndexSet,
    candidates: &IndexSet,
    k: usize,
    model: &M,
    pop: &Population,
) -> Result<SampleSet, SamplerError> {
    check_size(k, candidates.len())?;
    if let Some(id) = candidates.iter().find(|&id| prior.contains(id)) {
        return Err(SamplerError::OverlapsPrior(id));
    }
    let mut scored = bmvi_scores(candidates, pop, model)?;
    scored.sort_by(|a, b| match b.1.partial_cmp(&a.1) {
        Some(Ordering::Equal) | None => a.0.cmp(&b.0),
        Some(o) => o,
    });
    Ok(SampleSet {
        selected: scored[..k].iter().map(|(id, _)| *id).collect(),
        method: SamplerKind::Bmvi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Hyperparams, ModelError, PredictiveDistribution};

    /// Variance equal to the first feature.
    struct FirstFeature;

    impl PredictiveModel for FirstFeature {
        fn dim(&self) -> usize {
            1
        }
        fn hyperparams(&self) -> Hyperparams {
            Hyperparams { alpha: 1.0, beta: 1.0 }
        }
        fn predict(&self, x: &[f64]) -> Result<PredictiveDistribution, ModelError> {
            Ok(PredictiveDistribution { mean: 0.0, variance: x[0] })
        }
    }

    fn pop(xs: &[f64]) -> Population {
        Population::new(vec!["v".into()], "y", xs.iter().map(|&v| (vec![v], 0.0)).collect()).unwrap()
    }

    #[test]
    fn takes_largest_and_breaks_ties_by_id() {
        let p = pop(&[5.0, 3.0, 9.0, 3.0, 3.0, 1.0]);
        let prior = IndexSet::new([0]);
        let cands = IndexSet::new(1..6);
        let s = bmvi_sample(&prior, &cands, 1, &FirstFeature, &p).unwrap();
        assert_eq!(s.selected.ids(), &[2]);
        let s = bmvi_sample(&prior, &cands, 3, &FirstFeature, &p).unwrap();
        assert_eq!(s.selected.ids(), &[1, 2, 3]);
    }

    #[test]
    fn rejects_overlap_and_bad_sizes() {
        let p = pop(&[1.0, 2.0, 3.0]);
        let prior = IndexSet::new([0]);
        assert_eq!(
            bmvi_sample(&prior, &IndexSet::new([0, 1]), 1, &FirstFeature, &p).unwrap_err(),
            SamplerError::OverlapsPrior(0)
        );
        assert!(bmvi_sample(&prior, &IndexSet::new([1, 2]), 3, &FirstFeature, &p).is_err());
    }
}
