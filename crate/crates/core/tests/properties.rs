use mfonline_core::equilibrium::{
    gibbs_weights, phi_hat_outputs, quadrature_kl, solve_fixed_point_outputs, solve_mu_star_quadrature, GridDensity,
    IsSolverConfig, QuadratureGrid,
};
use mfonline_core::measures::{cost_u, cost_u_unreg, second_moment, WeightedMeasure};
use mfonline_core::model::{grad_sigma, predict, sigma, DataPoint, Theta};
use mfonline_core::regret::{cumulative_regret, instantaneous_regret, Variant};
use mfonline_core::stats::paired_tests;
use proptest::collection::vec;
use proptest::prelude::*;

fn theta_and_x(n: usize) -> impl Strategy<Value = (Theta, Vec<f64>)> {
    (-3.0..3.0f64, vec(-2.0..2.0f64, n), -2.0..2.0f64, vec(-2.0..2.0f64, n)).prop_map(|(a, w, b, x)| (Theta::new(a, w, b), x))
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(0.01..1.0f64, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    })
}

fn measure(dim: usize, atoms: usize) -> impl Strategy<Value = WeightedMeasure> {
    (vec(-2.0..2.0f64, dim * atoms), weights(atoms)).prop_map(move |(s, w)| WeightedMeasure::new(dim, s, w).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn sigma_bounded_by_output_weight((theta, x) in theta_and_x(3)) {
        prop_assert!(sigma(&x, &theta).unwrap().abs() <= theta.a.abs());
    }

    #[test]
    fn grad_sigma_matches_central_differences((theta, x) in theta_and_x(3)) {
        let g = grad_sigma(&x, &theta).unwrap();
        let p = theta.flatten();
        let h = 1e-5;
        for j in 0..p.len() {
            let mut up = p.clone();
            let mut down = p.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (sigma(&x, &Theta::from_flat(&up).unwrap()).unwrap()
                - sigma(&x, &Theta::from_flat(&down).unwrap()).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() < 1e-7, "coordinate {j}: fd {fd} analytic {}", g[j]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn predict_is_linear_in_weights(
        s in vec(-2.0..2.0f64, 4 * 6),
        w1 in weights(6),
        w2 in weights(6),
        t in 0.0..1.0f64,
        x in vec(-2.0..2.0f64, 2),
    ) {
        let m1 = WeightedMeasure::new(4, s.clone(), w1.clone()).unwrap();
        let m2 = WeightedMeasure::new(4, s.clone(), w2.clone()).unwrap();
        let mix: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let total: f64 = mix.iter().sum();
        let mixed = WeightedMeasure::new(4, s, mix.iter().map(|v| v / total).collect()).unwrap();
        let lhs = predict(&mixed, &x).unwrap();
        let rhs = t * predict(&m1, &x).unwrap() + (1.0 - t) * predict(&m2, &x).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn regularization_gap_is_half_lambda_moment(m in measure(3, 5), x in -2.0..2.0f64, y in -1.0..1.0f64, lambda in 0.0..2.0f64) {
        let z = DataPoint::scalar(x, y);
        let gap = cost_u(&m, &z, lambda).unwrap() - cost_u_unreg(&m, &z).unwrap();
        prop_assert!((gap - 0.5 * lambda * second_moment(&m)).abs() < 1e-12);
    }

    #[test]
    fn regret_variants_differ_by_penalty_gap(a in measure(3, 4), b in measure(3, 7), x in -2.0..2.0f64, y in -1.0..1.0f64, lambda in 0.0..2.0f64) {
        let z = DataPoint::scalar(x, y);
        let reg = instantaneous_regret(&a, &b, &z, lambda, Variant::Regularized).unwrap();
        let unreg = instantaneous_regret(&a, &b, &z, lambda, Variant::Unregularized).unwrap();
        let expected = 0.5 * lambda * (second_moment(&a) - second_moment(&b));
        prop_assert!((reg - unreg - expected).abs() < 1e-12);
        prop_assert_eq!(instantaneous_regret(&a, &a, &z, lambda, Variant::Regularized).unwrap(), 0.0);
    }

    #[test]
    fn cost_invariant_under_permutation_and_splitting(m in measure(3, 5), x in -2.0..2.0f64, y in -1.0..1.0f64, lambda in 0.0..1.0f64) {
        let z = DataPoint::scalar(x, y);
        let base = cost_u(&m, &z, lambda).unwrap();
        let order = [3usize, 0, 4, 1, 2];
        let samples: Vec<f64> = order.iter().flat_map(|&i| m.samples()[3 * i..3 * i + 3].to_vec()).collect();
        let w: Vec<f64> = order.iter().map(|&i| m.weights()[i]).collect();
        let permuted = WeightedMeasure::new(3, samples, w).unwrap();
        prop_assert!((cost_u(&permuted, &z, lambda).unwrap() - base).abs() < 1e-12);

        let mut samples = m.samples().to_vec();
        samples.extend_from_slice(&m.samples()[..3]);
        let mut w = m.weights().to_vec();
        w[0] *= 0.5;
        w.push(w[0]);
        let split = WeightedMeasure::new(3, samples, w).unwrap();
        prop_assert!((cost_u(&split, &z, lambda).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_additive_over_concatenation(values in vec(-1.0..1.0f64, 3..40), cut in 1usize..39, dt in 0.001..0.5f64) {
        let cut = cut.min(values.len() - 2);
        let times: Vec<f64> = (0..values.len()).map(|i| i as f64 * dt).collect();
        let whole = *cumulative_regret(&times, &values).unwrap().last().unwrap();
        let left = *cumulative_regret(&times[..=cut], &values[..=cut]).unwrap().last().unwrap();
        let right = *cumulative_regret(&times[cut..], &values[cut..]).unwrap().last().unwrap();
        prop_assert!((whole - left - right).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_exact_on_affine(slope in -3.0..3.0f64, icept in -3.0..3.0f64, steps in 2usize..50) {
        let times: Vec<f64> = (0..steps).map(|i| 0.1 * i as f64 + 0.05 * (i * i) as f64 / steps as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| slope * t + icept).collect();
        let c = cumulative_regret(&times, &values).unwrap();
        let t = times[steps - 1];
        prop_assert!((c[steps - 1] - (0.5 * slope * t * t + icept * t)).abs() < 1e-12);
    }

    #[test]
    fn phi_hat_nonincreasing(outputs in vec(-2.0..2.0f64, 2..200), y in -1.0..1.0f64, m1 in -3.0..3.0f64, m2 in -3.0..3.0f64, beta in 0.005..2.0f64) {
        let (lo, hi) = if m1 < m2 { (m1, m2) } else { (m2, m1) };
        let a = phi_hat_outputs(lo, &outputs, y, beta).unwrap().value;
        let b = phi_hat_outputs(hi, &outputs, y, beta).unwrap().value;
        prop_assert!(a >= b - 1e-12);
    }

    #[test]
    fn fixed_point_shifts_with_outputs_and_response(outputs in vec(-1.0..1.0f64, 5..100), y in -1.0..1.0f64, c in -1.0..1.0f64, beta in 0.02..1.0f64) {
        let cfg = IsSolverConfig::default();
        let (root, w) = solve_fixed_point_outputs(&outputs, y, beta, &cfg).unwrap();
        let shifted: Vec<f64> = outputs.iter().map(|s| s + c).collect();
        let (root_s, w_s) = solve_fixed_point_outputs(&shifted, y + c, beta, &cfg).unwrap();
        prop_assert!((root_s.x - root.x - c).abs() < 1e-8);
        for (a, b) in w.iter().zip(&w_s) {
            prop_assert!((a - b).abs() < 1e-6);
        }
        // shifting every exponent by a constant leaves the normalized weights alone
        let w1 = gibbs_weights(root.x, &outputs, y, beta).unwrap();
        let w2 = gibbs_weights(root.x + c, &shifted, y + c, beta).unwrap();
        for (a, b) in w1.iter().zip(&w2) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn paired_tests_symmetric_under_swap(a in vec(-1.0..1.0f64, 6..40), shift in -0.5..0.5f64, noise in vec(-0.3..0.3f64, 40)) {
        let b: Vec<f64> = a.iter().zip(&noise).map(|(x, e)| x + shift + e).collect();
        let ab = paired_tests(&a, &b).unwrap();
        let ba = paired_tests(&b, &a).unwrap();
        prop_assert_eq!(ab.mean_diff, -ba.mean_diff);
        prop_assert!((ab.t_p - ba.t_p).abs() < 1e-12);
        prop_assert!((ab.wilcoxon_p - ba.wilcoxon_p).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn kl_to_equilibrium_nonnegative(
        x in -2.0..2.0f64,
        y in -0.8..0.8f64,
        mean in -0.5..0.5f64,
        sd in 0.1..0.8f64,
        bump in 0.0..1.0f64,
    ) {
        let (beta, lambda) = (0.1, 0.5);
        let grid = QuadratureGrid::for_prior(beta, lambda, 801).unwrap();
        let z = DataPoint::scalar(x, y);
        let mu = solve_mu_star_quadrature(&grid, &z, beta, lambda).unwrap();
        prop_assert!(mu.density.values.iter().all(|v| *v > 0.0));
        prop_assert!((mu.density.mass() - 1.0).abs() < 1e-10);
        let rho: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|t| (-(t - mean).powi(2) / (2.0 * sd * sd)).exp() * (1.0 + bump * (3.0 * t).sin().powi(2)))
            .collect();
        let rho = GridDensity::normalized(grid, rho).unwrap();
        prop_assert!(quadrature_kl(&rho, &mu.density).unwrap() >= -1e-8);
    }
}
