use mfonline_core::datastream::{gen_nonlinear, gen_periodic, NonlinearConfig, PeriodicConfig};
use mfonline_core::rng::SeedTree;

fn trial_seed(t: u64) -> u64 {
    SeedTree::new(2024).child("trial", t).seed()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn periodic_response_second_moment() {
    let m: Vec<f64> =
        (0..30).map(|t| gen_periodic(&PeriodicConfig::default(), trial_seed(t)).unwrap().0.mean_square_response()).collect();
    let avg = mean(&m);
    assert!((avg - 0.525).abs() <= 0.15, "mean y^2 = {avg}");
}

#[test]
fn nonlinear_response_second_moment() {
    let m: Vec<f64> = (0..30)
        .map(|t| gen_nonlinear(&NonlinearConfig::default(), trial_seed(t)).unwrap().0.mean_square_response())
        .collect();
    let avg = mean(&m);
    assert!((avg - 0.047).abs() <= 0.02, "mean y^2 = {avg}");
}

// Raw OU paths over T = 20 span only ~10 correlation times, so their sample
// correlation is far noisier than 1/sqrt(K). The increments are nearly
// independent across steps and carry the same independence information.
#[test]
fn train_and_test_covariates_are_uncorrelated() {
    let (train, test) = gen_periodic(&PeriodicConfig::default(), 99).unwrap();
    let inc = |t: &mfonline_core::datastream::Trajectory| -> Vec<f64> {
        t.points().windows(2).map(|w| w[1].x[0] - w[0].x[0]).collect()
    };
    let (a, b) = (inc(&train), inc(&test));
    let (ma, mb) = (mean(&a), mean(&b));
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    let r = cov / (va * vb).sqrt();
    assert!(r.abs() < 0.1, "correlation {r}");
}

#[test]
fn generation_is_reproducible() {
    let cfg = NonlinearConfig::default();
    let (a, b, _) = gen_nonlinear(&cfg, 7).unwrap();
    let (c, d, _) = gen_nonlinear(&cfg, 7).unwrap();
    assert_eq!(a, c);
    assert_eq!(b, d);
    let (e, _, _) = gen_nonlinear(&cfg, 8).unwrap();
    assert_ne!(a, e);
}
