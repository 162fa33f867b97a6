//! Gaussian-mixture response surface evaluated on a regular 2-D lattice.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Population;

pub const DEFAULT_COMPONENTS: usize = 10;
pub const DEFAULT_GRID_SIDE: usize = 29;
pub const DEFAULT_DOMAIN: (f64, f64) = (-20.0, 20.0);

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("grid side must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("domain [{0}, {1}] is empty")]
    EmptyDomain(f64, f64),
    #[error("component {0}: covariance is not symmetric positive-definite")]
    NotPositiveDefinite(usize),
    #[error("at least one component is required")]
    NoComponents,
}

/// One bivariate normal bump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub mu: [f64; 2],
    pub sigma: [[f64; 2]; 2],
}

impl GmmComponent {
    pub fn is_spd(&self) -> bool {
        let [[a, b], [c, d]] = self.sigma;
        if (b - c).abs() > 1e-12 {
            return false;
        }
        // both eigenvalues of a symmetric 2x2 are positive iff a > 0 and det > 0
        a > 0.0 && a * d - b * c > 0.0
    }

    pub fn density(&self, x: [f64; 2]) -> f64 {
        let [[a, b], [_, d]] = self.sigma;
        let det = a * d - b * b;
        let dx = x[0] - self.mu[0];
        let dy = x[1] - self.mu[1];
        // inverse of [[a, b], [b, d]] is [[d, -b], [-b, a]] / det
        let quad = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        (-0.5 * quad).exp() / (2.0 * PI * det.sqrt())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub components: Vec<GmmComponent>,
    pub grid_side: usize,
    pub domain: (f64, f64),
    pub seed: u64,
}

impl GmmSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        if self.components.is_empty() {
            return Err(SyntheticError::NoComponents);
        }
        if self.grid_side < 2 {
            return Err(SyntheticError::GridTooSmall(self.grid_side));
        }
        if !(self.domain.0 < self.domain.1) {
            return Err(SyntheticError::EmptyDomain(self.domain.0, self.domain.1));
        }
        if let Some(i) = self.components.iter().position(|c| !c.is_spd()) {
            return Err(SyntheticError::NotPositiveDefinite(i));
        }
        Ok(())
    }

    /// Equispaced lattice coordinates, endpoints included.
    pub fn axis(&self) -> Vec<f64> {
        let (lo, hi) = self.domain;
        let steps = (self.grid_side - 1) as f64;
        (0..self.grid_side)
            .map(|i| {
                if i + 1 == self.grid_side {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / steps
                }
            })
            .collect()
    }
}

/// Unweighted sum of the component densities at `x`.
pub fn gmm_density(spec: &GmmSpec, x: [f64; 2]) -> f64 {
    spec.components.iter().map(|c| c.density(x)).sum()
}

/// Random spec with the default component count and lattice.
pub fn random_spec(seed: u64) -> GmmSpec {
    random_spec_with(seed, DEFAULT_COMPONENTS, DEFAULT_GRID_SIDE)
}

/// Means uniform over the domain square; covariances `L Lᵀ + 0.5 I` with the
/// entries of `L` uniform in [-3, 3].
pub fn random_spec_with(seed: u64, components: usize, grid_side: usize) -> GmmSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = DEFAULT_DOMAIN;
    let components = (0..components)
        .map(|_| {
            let mu = [rng.random_range(lo..=hi), rng.random_range(lo..=hi)];
            let l: [f64; 4] = std::array::from_fn(|_| rng.random_range(-3.0..=3.0));
            // L = [[l0, l1], [l2, l3]]
            let s00 = l[0] * l[0] + l[1] * l[1] + 0.5;
            let s01 = l[0] * l[2] + l[1] * l[3];
            let s11 = l[2] * l[2] + l[3] * l[3] + 0.5;
            GmmComponent {
                mu,
                sigma: [[s00, s01], [s01, s11]],
            }
        })
        .collect();
    GmmSpec {
        components,
        grid_side,
        domain: DEFAULT_DOMAIN,
        seed,
    }
}

/// Evaluates the mixture on the `grid_side²` lattice, x1 varying slowest.
pub fn generate_population(spec: &GmmSpec) -> Result<Population, SyntheticError> {
    spec.validate()?;
    let axis = spec.axis();
    let rows = axis
        .iter()
        .flat_map(|&a| axis.iter().map(move |&b| [a, b]))
        .map(|x| (x.to_vec(), gmm_density(spec, x)))
        .collect();
    Ok(Population::new(vec!["x1".into(), "x2".into()], "y", rows)
        .expect("lattice points are finite and two-dimensional"))
}

/// Mean central-difference gradient magnitude over boundary and interior
/// lattice nodes. One-sided differences are used on the boundary.
pub fn edge_interior_gradients(spec: &GmmSpec) -> (f64, f64) {
    let axis = spec.axis();
    let n = axis.len();
    let h = axis[1] - axis[0];
    let y = |i: usize, j: usize| gmm_density(spec, [axis[i], axis[j]]);
    let diff = |i: usize, j: usize, di: bool| {
        let (lo, hi) = if di {
            (i.saturating_sub(1), (i + 1).min(n - 1))
        } else {
            (j.saturating_sub(1), (j + 1).min(n - 1))
        };
        let span = (hi - lo) as f64 * h;
        if di {
            (y(hi, j) - y(lo, j)) / span
        } else {
            (y(i, hi) - y(i, lo)) / span
        }
    };
    let (mut edge, mut ne, mut inner, mut ni) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..n {
        for j in 0..n {
            let g = diff(i, j, true).hypot(diff(i, j, false));
            if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                edge += g;
                ne += 1;
            } else {
                inner += g;
                ni += 1;
            }
        }
    }
    (edge / ne as f64, inner / ni.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard(x: [f64; 2]) -> f64 {
        let spec = GmmSpec {
            components: vec![GmmComponent {
                mu: [0.0, 0.0],
                sigma: [[1.0, 0.0], [0.0, 1.0]],
            }],
            grid_side: 2,
            domain: DEFAULT_DOMAIN,
            seed: 0,
        };
        gmm_density(&spec, x)
    }

    #[test]
    fn standard_normal_values() {
        assert!((standard([0.0, 0.0]) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((standard([0.0, 0.0]) - 0.15915).abs() < 1e-5);
        assert!((standard([1.0, 0.0]) - (-0.5f64).exp() / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn default_lattice_has_841_points_with_corners() {
        let pop = generate_population(&random_spec(7)).unwrap();
        assert_eq!(pop.len(), 841);
        let first = &pop.point(0).x;
        let last = &pop.point(840).x;
        assert_eq!(first, &vec![-20.0, -20.0]);
        assert_eq!(last, &vec![20.0, 20.0]);
        assert_eq!(pop.point(28).x, vec![-20.0, 20.0]);
        assert_eq!(pop.point(812).x, vec![20.0, -20.0]);
        assert!(pop.points().iter().all(|p| p.y > 0.0));
    }

    #[test]
    fn grid_side_two_is_the_corners() {
        let pop = generate_population(&random_spec_with(1, 10, 2)).unwrap();
        let xs: Vec<_> = pop.points().iter().map(|p| p.x.clone()).collect();
        assert_eq!(
            xs,
            vec![
                vec![-20.0, -20.0],
                vec![-20.0, 20.0],
                vec![20.0, -20.0],
                vec![20.0, 20.0]
            ]
        );
    }

    #[test]
    fn seeds_are_deterministic() {
        let a = generate_population(&random_spec(11)).unwrap();
        let b = generate_population(&random_spec(11)).unwrap();
        assert_eq!(a.ys(), b.ys());
        assert_ne!(random_spec(11), random_spec(12));
    }

    #[test]
    fn random_specs_are_spd() {
        for seed in 0..200 {
            let spec = random_spec(seed);
            assert_eq!(spec.components.len(), 10);
            spec.validate().unwrap();
        }
    }

    #[test]
    fn validation_errors() {
        let mut spec = random_spec(0);
        spec.grid_side = 1;
        assert_eq!(generate_population(&spec).unwrap_err(), SyntheticError::GridTooSmall(1));
        let mut spec = random_spec(0);
        spec.components[3].sigma = [[1.0, 2.0], [2.0, 1.0]];
        assert_eq!(spec.validate(), Err(SyntheticError::NotPositiveDefinite(3)));
    }
}
