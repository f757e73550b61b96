use mfonline_core::equilibrium::{solve_mu_star_with, IsSolverConfig, SampleSet};
use mfonline_core::model::{DataPoint, FeatureMap, TanhNeuron, TruncationSpec, Truncated};
use mfonline_core::rng::{standard_normal, SeedTree};
use mfonline_core::theory::{check_empirical_moment_bound, BoundSpec};
use rand::Rng;

struct Zero;

impl FeatureMap for Zero {
    fn param_dim(&self) -> usize {
        3
    }
    fn covariate_dim(&self) -> usize {
        1
    }
    fn eval(&self, _: &[f64], _: &[f64]) -> f64 {
        0.0
    }
    fn grad(&self, _: &[f64], _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

#[test]
fn zero_feature_map_recovers_prior_moment() {
    let (beta, lambda) = (0.02, 0.1);
    let cfg = IsSolverConfig { prior_var: beta / lambda, ..Default::default() };
    let samples = SampleSet::draw_prior(3, cfg.prior_var, cfg.n_is, &mut SeedTree::new(1).stream("is-samples", 0)).unwrap();
    let mu = solve_mu_star_with(&Zero, &samples, &DataPoint::scalar(0.4, 0.3), beta, &cfg).unwrap();
    let spec = BoundSpec::new(1e-3, 1.0, 1.0, lambda, beta, 3).unwrap();
    let audit = check_empirical_moment_bound(&mu.measure, &spec).unwrap();
    assert!((audit.measured - 0.6).abs() < 0.02, "measured {}", audit.measured);
    assert!(audit.holds);
}

#[test]
fn truncated_equilibria_respect_q_star() {
    let (beta, lambda, c_sigma, c_z) = (0.05, 0.1, 0.5, 1.0);
    let map = Truncated { inner: TanhNeuron::new(2), level: c_sigma };
    let response = TruncationSpec::at(c_z).unwrap();
    let cfg = IsSolverConfig { n_is: 4000, prior_var: beta / lambda, ..Default::default() };
    let honest = BoundSpec::new(c_sigma, c_z, 1.0, lambda, beta, 4).unwrap();
    let understated = BoundSpec { c_sigma: c_sigma / 2.0, ..honest };
    let mut understated_failures = 0;
    for seed in 0..100u64 {
        let tree = SeedTree::new(seed);
        let mut rng = tree.stream("instance", 0);
        let x = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let y = response.apply(2.0 * standard_normal(&mut rng));
        let samples = SampleSet::draw_prior(4, cfg.prior_var, cfg.n_is, &mut tree.stream("is-samples", 0)).unwrap();
        let mu = solve_mu_star_with(&map, &samples, &DataPoint::new(x, y), beta, &cfg).unwrap();
        assert!(check_empirical_moment_bound(&mu.measure, &honest).unwrap().holds, "seed {seed}");
        understated_failures += !check_empirical_moment_bound(&mu.measure, &understated).unwrap().holds as usize;
    }
    println!("understated C_sigma: {understated_failures}/100 audits failed");
}
