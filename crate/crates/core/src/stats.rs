//! Trial-level statistics: normal-approximation summaries, paired t-test and
//! Wilcoxon signed-rank test.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const Z_95: f64 = 1.96;
const MIN_PAIRS: usize = 6;
/// Largest nonzero-difference count for which the Wilcoxon null is enumerated.
pub const WILCOXON_EXACT_MAX: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator).
    pub sd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Mean, sd and the normal-approximation 95% interval `mean ± 1.96 sd / sqrt(n)`.
pub fn summarize(values: &[f64]) -> Result<StatsSummary> {
    if values.len() < 2 {
        return Err(Error::input(format!("need at least 2 values, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("values must be finite"));
    }
    let (mean, sd) = mean_and_sd(values);
    let half = Z_95 * sd / (values.len() as f64).sqrt();
    Ok(StatsSummary { n: values.len(), mean, sd, ci_lo: mean - half, ci_hi: mean + half })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub n: usize,
    /// Mean of `a - b`.
    pub mean_diff: f64,
    pub t_stat: f64,
    pub t_p: f64,
    /// Sum of the ranks of positive differences.
    pub wilcoxon_w_plus: f64,
    pub wilcoxon_p: f64,
    pub wilcoxon_exact: bool,
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(0.5 * df, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Mid-ranks of `values` (1-based), doubled so that ties stay integral.
fn doubled_mid_ranks(values: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0u64; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end, mean (start + 1 + end) / 2
        let doubled = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = doubled;
        }
        ties.push(end - start);
        start = end;
    }
    (ranks, ties)
}

/// Exact two-sided p-value by enumerating all sign assignments.
fn wilcoxon_exact_p(doubled_ranks: &[u64], doubled_w_plus: u64) -> f64 {
    let n = doubled_ranks.len();
    let total: u64 = doubled_ranks.iter().sum();
    // distribution of the doubled statistic via subset-sum counts
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    for &r in doubled_ranks {
        for s in (r as usize..=total as usize).rev() {
            counts[s] += counts[s - r as usize];
        }
    }
    let all = (1u64 << n) as f64;
    let lower: u64 = counts[..=doubled_w_plus as usize].iter().sum();
    let upper: u64 = counts[doubled_w_plus as usize..].iter().sum();
    (2.0 * lower.min(upper) as f64 / all).min(1.0)
}

fn wilcoxon(diffs: &[f64]) -> Result<(f64, f64, bool)> {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = doubled_mid_ranks(&abs);
    let doubled_w_plus: u64 = nonzero.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| *r).sum();
    let w_plus = doubled_w_plus as f64 / 2.0;
    let n = nonzero.len();
    if n <= WILCOXON_EXACT_MAX {
        return Ok((w_plus, wilcoxon_exact_p(&ranks, doubled_w_plus), true));
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    Ok((w_plus, erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0), false))
}

/// Paired t-test and Wilcoxon signed-rank test on `a - b`.
pub fn paired_tests(a: &[f64], b: &[f64]) -> Result<PairedTestResult> {
    if a.len() != b.len() {
        return Err(Error::input("paired samples must have equal length"));
    }
    if a.len() < MIN_PAIRS {
        return Err(Error::Degenerate(format!("need at least {MIN_PAIRS} pairs, got {}", a.len())));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::input("paired values must be finite"));
    }
    let (w_plus, wilcoxon_p, exact) = wilcoxon(&diffs)?;
    let n = diffs.len();
    let (mean_diff, sd) = mean_and_sd(&diffs);
    let t_stat = mean_diff / (sd / (n as f64).sqrt());
    let t_p = if sd == 0.0 { 0.0 } else { student_t_two_sided(t_stat, (n - 1) as f64) };
    Ok(PairedTestResult {
        n,
        mean_diff,
        t_stat: if sd == 0.0 { f64::INFINITY.copysign(mean_diff) } else { t_stat },
        t_p,
        wilcoxon_w_plus: w_plus,
        wilcoxon_p,
        wilcoxon_exact: exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn summary_examples() {
        let s = summarize(&[1.0; 4]).unwrap();
        assert_eq!((s.mean, s.sd, s.ci_lo, s.ci_hi), (1.0, 0.0, 1.0, 1.0));
        let s = summarize(&[0.0, 2.0]).unwrap();
        assert_abs_diff_eq!(s.sd, 2.0f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.ci_lo, 1.0 - 1.96, epsilon = 1e-15);
        assert_abs_diff_eq!(s.ci_hi, 1.0 + 1.96, epsilon = 1e-15);
        assert!(summarize(&[1.0]).is_err());
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let a = [0.1, 0.4, 0.2, 0.9, 0.5, 0.3];
        assert!(matches!(paired_tests(&a, &a).unwrap_err(), Error::Degenerate(_)));
        assert!(matches!(paired_tests(&a[..2], &a[..2]).unwrap_err(), Error::Degenerate(_)));
    }

    #[test]
    fn all_positive_eight_pairs() {
        let a = [1.1, 2.3, 0.4, 5.0, 3.3, 0.9, 1.7, 2.2];
        let b = [0.0; 8];
        let r = paired_tests(&a, &b).unwrap();
        assert!(r.wilcoxon_exact);
        assert_eq!(r.wilcoxon_w_plus, 36.0);
        assert_eq!(r.wilcoxon_p, 0.0078125);
    }

    #[test]
    fn exact_null_with_ties_is_symmetric() {
        // ranks with ties: |d| = 1, 1, 2, 3, 3, 3
        let d = [1.0, -1.0, 2.0, -3.0, 3.0, 3.0];
        let r = paired_tests(&d, &[0.0; 6]).unwrap();
        let flipped: Vec<f64> = d.iter().map(|v| -v).collect();
        let s = paired_tests(&flipped, &[0.0; 6]).unwrap();
        assert_eq!(r.wilcoxon_p, s.wilcoxon_p);
        assert_eq!(r.wilcoxon_w_plus + s.wilcoxon_w_plus, 21.0);
    }

    #[test]
    fn t_distribution_reference_values() {
        // t = 2.262 is the 0.975 quantile at 9 degrees of freedom
        assert_abs_diff_eq!(student_t_two_sided(2.2621571628, 9.0), 0.05, epsilon = 1e-8);
        assert_abs_diff_eq!(student_t_two_sided(0.0, 5.0), 1.0, epsilon = 1e-15);
        // df = 1 is Cauchy: p = 1 - (2 / pi) atan(t)
        let t: f64 = 1.7;
        assert_abs_diff_eq!(student_t_two_sided(t, 1.0), 1.0 - 2.0 / std::f64::consts::PI * t.atan(), epsilon = 1e-12);
    }

    #[test]
    fn swapping_samples_flips_only_the_sign() {
        let a = [0.3, 0.1, 0.7, 0.2, 0.5, 0.9, 0.4, 0.35, 0.6, 0.15, 0.8, 0.45, 0.05, 0.55];
        let b = [0.2, 0.3, 0.4, 0.25, 0.1, 0.5, 0.45, 0.3, 0.2, 0.1, 0.6, 0.5, 0.1, 0.3];
        let ab = paired_tests(&a, &b).unwrap();
        let ba = paired_tests(&b, &a).unwrap();
        assert!(!ab.wilcoxon_exact);
        assert_eq!(ab.mean_diff, -ba.mean_diff);
        assert_abs_diff_eq!(ab.t_p, ba.t_p, epsilon = 1e-15);
        assert_abs_diff_eq!(ab.wilcoxon_p, ba.wilcoxon_p, epsilon = 1e-15);
    }
}
