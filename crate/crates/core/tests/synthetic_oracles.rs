use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varsample::synthetic::{edge_interior_gradients, generate_population, gmm_density, random_spec, GmmSpec};

/// Bivariate normal density written out from the closed form.
fn normal2(x: [f64; 2], mu: [f64; 2], s: [[f64; 2]; 2]) -> f64 {
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let (dx, dy) = (x[0] - mu[0], x[1] - mu[1]);
    let q = (s[1][1] * dx * dx - (s[0][1] + s[1][0]) * dx * dy + s[0][0] * dy * dy) / det;
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

#[test]
fn density_is_the_sum_of_component_densities() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..20 {
        let spec = random_spec(seed);
        for _ in 0..50 {
            let x = [rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0)];
            let oracle: f64 = spec.components.iter().map(|c| normal2(x, c.mu, c.sigma)).sum();
            let got = gmm_density(&spec, x);
            assert!((got - oracle).abs() <= 1e-12 * oracle.max(1e-300), "{got} vs {oracle}");
        }
    }
}

fn largest_sd(s: [[f64; 2]; 2]) -> f64 {
    let tr = s[0][0] + s[1][1];
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    (0.5 * tr + (0.25 * tr * tr - det).max(0.0).sqrt()).sqrt()
}

#[test]
fn density_integrates_to_component_count() {
    let spec = random_spec(3);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for c in &spec.components {
        let r = 6.0 * largest_sd(c.sigma);
        for d in 0..2 {
            lo[d] = lo[d].min(c.mu[d] - r);
            hi[d] = hi[d].max(c.mu[d] + r);
        }
    }
    let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws = 1_000_000;
    let sum: f64 = (0..draws)
        .map(|_| gmm_density(&spec, [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])]))
        .sum();
    let integral = area * sum / draws as f64;
    assert!((integral - 10.0).abs() <= 0.2, "integral {integral}");
}

#[test]
fn population_values_are_positive_lattice_densities() {
    let spec = random_spec(5);
    let pop = generate_population(&spec).unwrap();
    assert_eq!(pop.len(), 841);
    for p in pop.points() {
        assert!(p.y > 0.0);
        assert_eq!(p.y, gmm_density(&spec, [p.x[0], p.x[1]]));
    }
    assert_eq!(pop.point(0).x, vec![-20.0, -20.0]);
    assert_eq!(pop.point(840).x, vec![20.0, 20.0]);
}

#[test]
fn distinct_seeds_give_distinct_means() {
    for s in 0..100u64 {
        let (a, b) = (random_spec(2 * s), random_spec(2 * s + 1));
        assert!(a.components.iter().zip(&b.components).any(|(p, q)| p.mu != q.mu));
    }
}

#[test]
fn records_edge_and_interior_gradient_magnitudes() {
    // means confined to the centre of the domain
    let mut spec: GmmSpec = random_spec(8);
    for c in &mut spec.components {
        c.mu = [c.mu[0] / 2.0, c.mu[1] / 2.0];
    }
    let (edge, interior) = edge_interior_gradients(&spec);
    eprintln!("mean |grad y|: edge {edge:e}, interior {interior:e}");
    assert!(edge.is_finite() && interior.is_finite());
    assert_ne!(edge, interior);
}
