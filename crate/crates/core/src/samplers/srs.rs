use rand::seq::index;
use rand::Rng;

use super::{check_size, SampleSet, SamplerError, SamplerKind};
use crate::dataset::IndexSet;

/// Uniform sample of `k` candidates without replacement.
pub fn srs_sample<R: Rng + ?Sized>(
    candidates: &IndexSet,
    k: usize,
    rng: &mut R,
) -> Result<SampleSet, SamplerError> {
    check_size(k, candidates.len())?;
    let ids = candidates.ids();
    let picked = index::sample(rng, ids.len(), k);
    Ok(SampleSet {
        selected: picked.into_iter().map(|i| ids[i]).collect(),
        method: SamplerKind::Srs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exhaustion_and_bounds() {
        let c = IndexSet::new([3, 5, 8]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(srs_sample(&c, 3, &mut rng).unwrap().selected, c);
        assert!(srs_sample(&c, 0, &mut rng).is_err());
        assert_eq!(
            srs_sample(&c, 4, &mut rng).unwrap_err(),
            SamplerError::SizeOutOfRange { k: 4, available: 3 }
        );
    }

    #[test]
    fn seeded() {
        let c = IndexSet::new(0..50);
        let a = srs_sample(&c, 7, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = srs_sample(&c, 7, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.selected.len(), 7);
    }
}
