use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use varsample::dataset::{is_partition, split_prior};
use varsample::experiment::{
    default_fractions, estimate_population, Experiment, ExperimentError, FractionVector, ModelKind, ModelSpec,
    RepetitionSeeds,
};
use varsample::models::{Hyperparams, ModelError, PredictiveDistribution, PredictiveModel};
use varsample::samplers::{srs_sample, SamplerKind};
use varsample::synthetic::{generate_population, random_spec_with};
use varsample::Population;

fn ten_points() -> Population {
    let ys = [2.0, 3.5, 1.0, 4.0, 6.5, 5.0, 7.5, 6.0, 9.0, 8.0];
    let rows = ys.iter().enumerate().map(|(i, &y)| (vec![i as f64 * 0.5 + (i % 3) as f64], y)).collect();
    Population::new(vec!["x".into()], "y", rows).unwrap()
}

fn small_synthetic(side: usize) -> Population {
    generate_population(&random_spec_with(4, 10, side)).unwrap()
}

#[test]
fn single_repetition_replays_by_hand() {
    let exp = Experiment::new(&ten_points()).unwrap();
    let pop = exp.population();
    let f = FractionVector::new(0.3, 0.4, 0.3).unwrap();
    let hyper = Hyperparams::new(0.5, 2.0).unwrap();
    let spec = ModelSpec {
        grid: vec![hyper],
        ..ModelSpec::rls()
    };
    let seed = 31;
    let cell = exp.run_cell(&f, &spec, &[SamplerKind::Srs], 1, seed).unwrap();
    assert_eq!(cell.len(), 1);

    let seeds = RepetitionSeeds::new(seed, &f, ModelKind::Rls, 0, 0);
    let (prior, rest) = split_prior(pop, 0.3, &mut ChaCha8Rng::seed_from_u64(seeds.prior())).unwrap();
    let sample = srs_sample(&rest, 4, &mut ChaCha8Rng::seed_from_u64(seeds.sample(SamplerKind::Srs)))
        .unwrap()
        .selected;
    let labelled = prior.union(&sample);
    let ids: Vec<usize> = labelled.iter().collect();
    let x = DMatrix::from_fn(ids.len(), 2, |i, j| if j == 0 { 1.0 } else { pop.point(ids[i]).x[0] });
    let y = DVector::from_iterator(ids.len(), ids.iter().map(|&i| pop.point(i).y));
    let mut system = x.transpose() * &x;
    system[(1, 1)] += hyper.alpha / hyper.beta;
    let theta = system.try_inverse().unwrap() * x.transpose() * y;

    let mut values: Vec<f64> = ids.iter().map(|&i| pop.point(i).y).collect();
    for id in (0..10).filter(|id| !labelled.contains(*id)) {
        values.push(theta[0] + theta[1] * pop.point(id).x[0]);
    }
    let mu = values.iter().sum::<f64>() / 10.0;
    let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 9.0;
    let se_mu = (mu - pop.true_mean()).powi(2);
    let se_var = (var - pop.true_variance()).powi(2);

    let c = &cell[0];
    assert_eq!(c.repetitions, 1);
    assert!((c.mse_mean - se_mu).abs() <= 1e-10 * se_mu.max(1e-12), "{} vs {se_mu}", c.mse_mean);
    assert!((c.mse_variance - se_var).abs() <= 1e-10 * se_var.max(1e-12), "{} vs {se_var}", c.mse_variance);
}

/// Returns the true response for every population input.
struct Oracle(HashMap<Vec<u64>, f64>);

impl Oracle {
    fn new(pop: &Population) -> Self {
        Self(pop.points().iter().map(|p| (p.x.iter().map(|v| v.to_bits()).collect(), p.y)).collect())
    }
}

impl PredictiveModel for Oracle {
    fn dim(&self) -> usize {
        2
    }
    fn hyperparams(&self) -> Hyperparams {
        Hyperparams { alpha: 1.0, beta: 1.0 }
    }
    fn predict(&self, x: &[f64]) -> Result<PredictiveDistribution, ModelError> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        Ok(PredictiveDistribution {
            mean: self.0[&key],
            variance: 0.0,
        })
    }
}

#[test]
fn perfect_model_recovers_true_parameters() {
    let pop = small_synthetic(12);
    let oracle = Oracle::new(&pop);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (d, v) = split_prior(&pop, 0.4, &mut rng).unwrap();
    let e = estimate_population(&d, &v, &oracle, &pop).unwrap();
    assert!((e.mean_hat - pop.true_mean()).abs() <= 1e-15 * pop.true_mean().abs().max(1e-300) * 10.0);
    assert!((e.var_hat - pop.true_variance()).abs() <= 1e-12 * pop.true_variance());
}

#[test]
fn samplers_share_the_prior_and_partition_the_population() {
    let exp = Experiment::new(&small_synthetic(15)).unwrap();
    let pop = exp.population();
    for f in default_fractions() {
        let (np, ns, nv) = f.sizes(pop.len());
        for rep in 0..3 {
            let r = exp.run_repetition(&f, &ModelSpec::rls(), &SamplerKind::ALL, 5, rep, 0).unwrap();
            assert_eq!(r.outcomes.len(), 3);
            assert_eq!(r.prior.len(), np);
            for o in &r.outcomes {
                assert_eq!(o.prior, r.prior);
                assert_eq!(o.sample.len(), ns);
                assert_eq!(o.unlabelled.len(), nv);
                assert!(is_partition(pop, &[&o.prior, &o.sample, &o.unlabelled]));
                assert!(o.sq_error_mean >= 0.0 && o.sq_error_variance >= 0.0);
            }
        }
    }
}

#[test]
fn test_block_is_exactly_thirty_percent() {
    let rows = (0..100).map(|i| (vec![(i as f64).sin(), (i as f64 * 0.37).cos()], i as f64 % 7.0)).collect();
    let pop = Population::new(vec!["a".into(), "b".into()], "y", rows).unwrap();
    let exp = Experiment::new(&pop).unwrap();
    let f = default_fractions()[5];
    assert_eq!(f.label(), ".6/.1/.3");
    let r = exp.run_repetition(&f, &ModelSpec::rls(), &SamplerKind::ALL, 1, 0, 0).unwrap();
    for o in &r.outcomes {
        assert_eq!(o.unlabelled.len(), 30);
    }
}

#[test]
fn reruns_are_bitwise_identical_and_thread_count_independent() {
    let exp = Experiment::new(&small_synthetic(10)).unwrap();
    let specs = [ModelSpec::rls(), ModelSpec::mlp()];
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| exp.run_grid(&specs, &default_fractions(), &SamplerKind::ALL, 2, 77).unwrap())
    };
    let serial = run(1);
    let again = run(1);
    let parallel = run(4);
    let json = |r: &varsample::experiment::ExperimentReport| serde_json::to_string(&r.to_json()).unwrap();
    assert_eq!(json(&serial), json(&again));
    assert_eq!(json(&serial), json(&parallel));
    assert_eq!(serial, parallel);

    assert_eq!(serial.cells.len(), 6 * 2 * 3);
    let mut csv = Vec::new();
    serial.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 6 * 2 * 3 * 2);
}

#[test]
fn different_seeds_differ() {
    let exp = Experiment::new(&small_synthetic(10)).unwrap();
    let f = [default_fractions()[2]];
    let a = exp.run_grid(&[ModelSpec::rls()], &f, &[SamplerKind::Srs], 3, 1).unwrap();
    let b = exp.run_grid(&[ModelSpec::rls()], &f, &[SamplerKind::Srs], 3, 2).unwrap();
    assert_ne!(a.cells[0].sq_errors_mean, b.cells[0].sq_errors_mean);
}

#[test]
fn infeasible_and_empty_runs_are_rejected() {
    let exp = Experiment::new(&small_synthetic(4)).unwrap();
    // 16 points: a 10% prior has 2 points, fewer than m + 2 = 4
    let err = exp
        .run_grid(&[ModelSpec::rls()], &default_fractions(), &SamplerKind::ALL, 1, 0)
        .unwrap_err();
    assert!(matches!(err, ExperimentError::Infeasible { prior: 2, needed: 4, .. }), "{err}");
    let ok = default_fractions()[3];
    assert!(matches!(
        exp.run_cell(&ok, &ModelSpec::rls(), &SamplerKind::ALL, 0, 0),
        Err(ExperimentError::NoRepetitions)
    ));
}

#[test]
fn squared_errors_are_kept_per_repetition() {
    let exp = Experiment::new(&small_synthetic(10)).unwrap();
    let cells = exp.run_cell(&default_fractions()[1], &ModelSpec::rls(), &SamplerKind::ALL, 7, 3).unwrap();
    for c in cells {
        assert_eq!(c.sq_errors_mean.len(), 7);
        assert_eq!(c.repetitions + c.failures, 7);
        let mean = c.sq_errors_mean.iter().sum::<f64>() / 7.0;
        assert_eq!(mean, c.mse_mean);
    }
}
