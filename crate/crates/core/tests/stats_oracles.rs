use mfonline_core::rng::{standard_normal, SeedTree};
use mfonline_core::stats::{paired_tests, summarize};
use num_bigint::BigInt;
use num_rational::BigRational;

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).unwrap()
}

fn to_f64(r: &BigRational) -> f64 {
    // scale to keep the integer division exact to well below f64 precision
    let scale: BigInt = BigInt::from(1u64) << 200usize;
    let q = (r.numer() * &scale) / r.denom();
    q.to_string().parse::<f64>().unwrap() / 2f64.powi(200)
}

#[test]
fn summary_matches_exact_rational_arithmetic() {
    let mut rng = SeedTree::new(3).stream("stats-oracle", 0);
    for n in [2usize, 7, 30, 500] {
        let values: Vec<f64> = (0..n).map(|_| 1e3 + standard_normal(&mut rng)).collect();
        let total = values.iter().map(|v| exact(*v)).fold(BigRational::from_integer(0.into()), |a, b| a + b);
        let mean = total / BigRational::from_integer(n.into());
        let ss = values
            .iter()
            .map(|v| {
                let d = exact(*v) - &mean;
                &d * &d
            })
            .fold(BigRational::from_integer(0.into()), |a, b| a + b);
        let var = ss / BigRational::from_integer((n - 1).into());
        let s = summarize(&values).unwrap();
        assert!((s.mean - to_f64(&mean)).abs() <= 1e-12 * to_f64(&mean).abs());
        let sd = to_f64(&var).sqrt();
        assert!((s.sd - sd).abs() <= 1e-10 * sd, "n {n}: {} vs {sd}", s.sd);
    }
}

#[test]
fn t_statistic_matches_two_pass_reference() {
    let mut rng = SeedTree::new(4).stream("t-ref", 0);
    let a: Vec<f64> = (0..25).map(|_| standard_normal(&mut rng)).collect();
    let b: Vec<f64> = a.iter().map(|x| x + 0.3 + 0.5 * standard_normal(&mut rng)).collect();
    let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let r = paired_tests(&a, &b).unwrap();
    assert!((r.t_stat - m / (sd / n.sqrt())).abs() < 1e-12);
}

#[test]
fn null_p_values_are_calibrated() {
    let mut rng = SeedTree::new(6).stream("null", 0);
    let reps = 10_000;
    let (mut t_rej, mut w_rej) = (0usize, 0usize);
    for _ in 0..reps {
        let a: Vec<f64> = (0..30).map(|_| standard_normal(&mut rng)).collect();
        let b: Vec<f64> = (0..30).map(|_| standard_normal(&mut rng)).collect();
        let r = paired_tests(&a, &b).unwrap();
        t_rej += (r.t_p < 0.05) as usize;
        w_rej += (r.wilcoxon_p < 0.05) as usize;
    }
    // binomial(10^4, 0.05) has sd ~ 0.0022
    let (t_rate, w_rate) = (t_rej as f64 / reps as f64, w_rej as f64 / reps as f64);
    assert!((t_rate - 0.05).abs() < 0.008, "t-test rejection rate {t_rate}");
    assert!((w_rate - 0.05).abs() < 0.008, "Wilcoxon rejection rate {w_rate}");
}
