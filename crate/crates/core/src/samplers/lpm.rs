//! Local pivotal method.
//!
//! Pairs of nearest undecided neighbours compete for inclusion probability
//! mass until every probability is 0 or 1. Each duel decides at least one of
//! the two points, so neighbours rarely end up in the sample together.

use rand::Rng;

use super::{check_size, SampleSet, SamplerError, SamplerKind};
use crate::dataset::{IndexSet, Population};

const SNAP: f64 = 1e-12;

fn snap(p: f64) -> f64 {
    if p.abs() <= SNAP {
        0.0
    } else if (p - 1.0).abs() <= SNAP {
        1.0
    } else {
        p
    }
}

fn decided(p: f64) -> bool {
    p == 0.0 || p == 1.0
}

/// Inclusion probabilities of the candidates, in candidate order.
#[derive(Clone, Debug, PartialEq)]
pub struct InclusionState {
    pub ids: Vec<usize>,
    pub pi: Vec<f64>,
    pub target_size: usize,
}

impl InclusionState {
    pub fn total(&self) -> f64 {
        self.pi.iter().sum()
    }

    pub fn undecided(&self) -> usize {
        self.pi.iter().filter(|p| !decided(**p)).count()
    }
}

/// One pivotal duel between `pi_i` and `pi_j`. The sum is conserved and at
/// least one output is 0 or 1.
pub fn lpm_update_pair<R: Rng + ?Sized>(pi_i: f64, pi_j: f64, rng: &mut R) -> Result<(f64, f64), SamplerError> {
    let in_range = |p: f64| (0.0..=1.0).contains(&p);
    if !in_range(pi_i) || !in_range(pi_j) {
        return Err(SamplerError::ProbabilityOutOfRange(pi_i, pi_j));
    }
    if decided(pi_i) && decided(pi_j) {
        return Err(SamplerError::AlreadyDecided(pi_i, pi_j));
    }
    let sum = pi_i + pi_j;
    let u: f64 = rng.random();
    let (a, b) = if sum < 1.0 {
        if u < pi_j / sum {
            (0.0, sum)
        } else {
            (sum, 0.0)
        }
    } else if u < (1.0 - pi_j) / (2.0 - sum) {
        (1.0, sum - 1.0)
    } else {
        (sum - 1.0, 1.0)
    };
    Ok((snap(a), snap(b)))
}

/// Draws a spatially balanced sample of size `k`.
pub fn lpm_sample<R: Rng + ?Sized>(
    candidates: &IndexSet,
    features: &Population,
    k: usize,
    rng: &mut R,
) -> Result<SampleSet, SamplerError> {
    lpm_sample_observed(candidates, features, k, rng, |_| {})
}

/// As [`lpm_sample`], calling `observe` after every pair update.
pub fn lpm_sample_observed<R, F>(
    candidates: &IndexSet,
    features: &Population,
    k: usize,
    rng: &mut R,
    mut observe: F,
) -> Result<SampleSet, SamplerError>
where
    R: Rng + ?Sized,
    F: FnMut(&InclusionState),
{
    let n = candidates.len();
    if n < 2 {
        return Err(SamplerError::TooFewCandidates(n));
    }
    check_size(k, n)?;
    let m = features.dim();
    let coords: Vec<f64> = candidates.iter().flat_map(|id| features.point(id).x.iter().copied()).collect();
    let mut state = InclusionState {
        ids: candidates.ids().to_vec(),
        pi: vec![snap(k as f64 / n as f64); n],
        target_size: k,
    };
    let mut open: Vec<usize> = (0..n).filter(|&i| !decided(state.pi[i])).collect();
    let mut ties = Vec::new();

    while open.len() >= 2 {
        let slot_i = rng.random_range(0..open.len());
        let i = open[slot_i];
        let xi = &coords[i * m..(i + 1) * m];

        ties.clear();
        let mut best = f64::INFINITY;
        for (slot, &j) in open.iter().enumerate() {
            if j == i {
                continue;
            }
            let d: f64 = coords[j * m..(j + 1) * m].iter().zip(xi).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best {
                best = d;
                ties.clear();
                ties.push(slot);
            } else if d == best {
                ties.push(slot);
            }
        }
        let slot_j = if ties.len() == 1 {
            ties[0]
        } else {
            ties[rng.random_range(0..ties.len())]
        };
        let j = open[slot_j];

        let (a, b) = lpm_update_pair(state.pi[i], state.pi[j], rng)?;
        state.pi[i] = a;
        state.pi[j] = b;
        observe(&state);

        let (hi, lo) = if slot_i > slot_j { (slot_i, slot_j) } else { (slot_j, slot_i) };
        for slot in [hi, lo] {
            if decided(state.pi[open[slot]]) {
                open.swap_remove(slot);
            }
        }
    }
    // Σπ is an integer, so a lone survivor can only differ from 0 or 1 by
    // accumulated rounding.
    if let Some(&last) = open.first() {
        state.pi[last] = state.pi[last].round();
        observe(&state);
    }

    let selected: IndexSet = state
        .ids
        .iter()
        .zip(&state.pi)
        .filter(|(_, p)| **p == 1.0)
        .map(|(id, _)| *id)
        .collect();
    debug_assert_eq!(selected.len(), k);
    Ok(SampleSet {
        selected,
        method: SamplerKind::Lpm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize) -> Population {
        let rows = (0..n).map(|i| (vec![i as f64, (i % 3) as f64], 0.0)).collect();
        Population::new(vec!["a".into(), "b".into()], "y", rows).unwrap()
    }

    #[test]
    fn pair_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (a, b) = lpm_update_pair(0.2, 0.3, &mut rng).unwrap();
            assert!((a, b) == (0.0, 0.5) || (a, b) == (0.5, 0.0));
            let (a, b) = lpm_update_pair(0.5, 0.5, &mut rng).unwrap();
            assert!((a, b) == (1.0, 0.0) || (a, b) == (0.0, 1.0));
            let (a, b) = lpm_update_pair(0.75, 0.5, &mut rng).unwrap();
            assert!((a, b) == (1.0, 0.25) || (a, b) == (0.25, 1.0));
        }
    }

    #[test]
    fn pair_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(lpm_update_pair(1.2, 0.1, &mut rng), Err(SamplerError::ProbabilityOutOfRange(..))));
        assert!(matches!(lpm_update_pair(0.1, -0.1, &mut rng), Err(SamplerError::ProbabilityOutOfRange(..))));
        assert!(matches!(lpm_update_pair(1.0, 0.0, &mut rng), Err(SamplerError::AlreadyDecided(..))));
    }

    #[test]
    fn full_sample_is_immediate() {
        let pop = line(6);
        let mut calls = 0;
        let s = lpm_sample_observed(&pop.all_ids(), &pop, 6, &mut ChaCha8Rng::seed_from_u64(0), |_| calls += 1).unwrap();
        assert_eq!(s.selected, pop.all_ids());
        assert_eq!(calls, 0);
    }

    #[test]
    fn size_and_termination() {
        let pop = line(37);
        let cands = IndexSet::new((0..37).filter(|i| i % 4 != 0));
        for seed in 0..50 {
            let mut updates = 0;
            let s = lpm_sample_observed(&cands, &pop, 11, &mut ChaCha8Rng::seed_from_u64(seed), |st| {
                updates += 1;
                assert!((st.total() - 11.0).abs() < 1e-9);
                assert!(st.pi.iter().all(|p| (0.0..=1.0).contains(p)));
            })
            .unwrap();
            assert_eq!(s.selected.len(), 11);
            assert!(s.selected.ids().iter().all(|id| cands.contains(*id)));
            assert!(updates <= cands.len());
        }
    }

    #[test]
    fn argument_errors() {
        let pop = line(5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            lpm_sample(&IndexSet::new([1]), &pop, 1, &mut rng).unwrap_err(),
            SamplerError::TooFewCandidates(1)
        );
        assert!(matches!(
            lpm_sample(&pop.all_ids(), &pop, 0, &mut rng),
            Err(SamplerError::SizeOutOfRange { .. })
        ));
    }

    #[test]
    fn seeded() {
        let pop = line(30);
        let a = lpm_sample(&pop.all_ids(), &pop, 9, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = lpm_sample(&pop.all_ids(), &pop, 9, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);
    }
}
