//! Equilibrium and hindsight benchmark measures.
//!
//! The instantaneous equilibrium with data frozen at `z = (x, y)` is the Gibbs
//! density
//!
//! ```text
//! mu*(theta) ∝ exp(-lambda |theta|^2 / (2 beta) - (2 / beta) (m* - y) sigma(x, theta))
//! ```
//!
//! with `m* = <mu*, sigma(x, .)>` solving a scalar fixed point. Two solvers are
//! provided: importance sampling from the Gaussian prior `N(0, beta/lambda I)`
//! (any dimension) and composite Simpson quadrature (one parameter only, used
//! as an oracle). The hindsight measure `rho*` replaces the single data point
//! by the time average over a trajectory and turns the scalar fixed point into
//! a vector one.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::datastream::Trajectory;
use crate::error::{check_dim, Error, Result};
use crate::measures::WeightedMeasure;
use crate::model::{DataPoint, FeatureMap, ScalarTanh, TanhNeuron};
use crate::rng::{fill_standard_normal, Stream};

/// Importance weights below this effective sample size are flagged.
pub const LOW_ESS_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IsSolverConfig {
    pub n_is: usize,
    /// Variance of the Gaussian proposal, normally `beta / lambda`.
    pub prior_var: f64,
    pub root_tol: f64,
    pub max_bracket_expansions: usize,
}

impl Default for IsSolverConfig {
    fn default() -> Self {
        IsSolverConfig { n_is: 20_000, prior_var: 0.2, root_tol: 1e-10, max_bracket_expansions: 40 }
    }
}

impl IsSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_is == 0 {
            return Err(Error::input("need at least one importance sample"));
        }
        if !(self.root_tol > 0.0) {
            return Err(Error::input("root tolerance must be positive"));
        }
        if !(self.prior_var > 0.0 && self.prior_var.is_finite()) {
            return Err(Error::input("prior variance must be positive"));
        }
        Ok(())
    }
}

/// Unweighted parameter samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    values: Vec<f64>,
}

impl SampleSet {
    pub fn from_flat(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.is_empty() || values.len() % dim != 0 {
            return Err(Error::input("sample values do not form whole samples"));
        }
        Ok(SampleSet { dim, values })
    }

    /// `n` i.i.d. draws from `N(0, prior_var I_dim)`.
    pub fn draw_prior(dim: usize, prior_var: f64, n: usize, rng: &mut Stream) -> Result<Self> {
        if !(prior_var > 0.0) {
            return Err(Error::input("prior variance must be positive"));
        }
        let mut values = vec![0.0; dim * n];
        fill_standard_normal(rng, &mut values);
        let sd = prior_var.sqrt();
        values.iter_mut().for_each(|v| *v *= sd);
        Self::from_flat(dim, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// `sigma(x, theta_i)` for every sample.
    pub fn outputs_with<F: FeatureMap>(&self, map: &F, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(map.param_dim(), self.dim)?;
        check_dim(map.covariate_dim(), x.len())?;
        Ok(self.values.chunks_exact(self.dim).map(|p| map.eval(x, p)).collect())
    }

    pub fn weighted(&self, weights: Vec<f64>) -> Result<WeightedMeasure> {
        WeightedMeasure::new(self.dim, self.values.clone(), weights)
    }
}

/// Self-normalized weights `w_i ∝ exp(e_i)` via a max shift.
fn normalize_log_weights(mut logw: Vec<f64>) -> Result<Vec<f64>> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Solver(format!("importance log-weights are not finite (max {max})")));
    }
    let mut total = 0.0;
    for v in logw.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in logw.iter_mut() {
        *v /= total;
    }
    Ok(logw)
}

fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Gibbs reweighting of prior samples at level `m`.
pub fn gibbs_weights(m: f64, outputs: &[f64], y: f64, beta: f64) -> Result<Vec<f64>> {
    if outputs.is_empty() {
        return Err(Error::input("no importance samples"));
    }
    if !(beta > 0.0) {
        return Err(Error::input("beta must be positive"));
    }
    let c = -2.0 / beta * (m - y);
    normalize_log_weights(outputs.iter().map(|s| c * s).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiEstimate {
    pub value: f64,
    pub ess: f64,
}

impl PhiEstimate {
    pub fn low_ess(&self) -> bool {
        self.ess < LOW_ESS_THRESHOLD
    }
}

/// `Phi_hat(m) = sum_i w_i(m) sigma_i` from precomputed outputs `sigma_i`.
pub fn phi_hat_outputs(m: f64, outputs: &[f64], y: f64, beta: f64) -> Result<PhiEstimate> {
    let w = gibbs_weights(m, outputs, y, beta)?;
    let value = w.iter().zip(outputs).map(|(w, s)| w * s).sum();
    Ok(PhiEstimate { value, ess: effective_sample_size(&w) })
}

/// `Phi_hat(m)` for tanh neurons.
pub fn phi_hat(m: f64, samples: &SampleSet, z: &DataPoint, beta: f64) -> Result<f64> {
    let outputs = samples.outputs_with(&TanhNeuron::new(z.x.len()), &z.x)?;
    Ok(phi_hat_outputs(m, &outputs, z.y, beta)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Bisection for a root of `f` on `[lo, hi]`.
///
/// The bracket is widened geometrically (doubling its half-width about the
/// midpoint) until `f` changes sign, at most `max_expansions` times. Stops
/// once `|f(x)| <= tol` or the bracket cannot be halved any further.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64, max_expansions: usize) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) {
        return Err(Error::input(format!("empty bracket [{lo}, {hi}]")));
    }
    let mut f_lo = f(lo)?;
    let mut f_hi = f(hi)?;
    let mut expansions = 0;
    while f_lo.signum() == f_hi.signum() && f_lo != 0.0 && f_hi != 0.0 {
        if expansions == max_expansions || !(f_lo.is_finite() && f_hi.is_finite()) {
            return Err(Error::Solver(format!(
                "no sign change on [{lo}, {hi}] after {expansions} expansions (f(lo) = {f_lo}, f(hi) = {f_hi})"
            )));
        }
        let (mid, half) = (0.5 * (lo + hi), hi - lo);
        lo = mid - half;
        hi = mid + half;
        f_lo = f(lo)?;
        f_hi = f(hi)?;
        expansions += 1;
    }
    if f_lo == 0.0 {
        return Ok(Root { x: lo, residual: 0.0, iterations: 0 });
    }
    if f_hi == 0.0 {
        return Ok(Root { x: hi, residual: 0.0, iterations: 0 });
    }
    let mut best = if f_lo.abs() < f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
    let mut iterations = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid)?;
        iterations += 1;
        if f_mid.abs() < best.1.abs() {
            best = (mid, f_mid);
        }
        if f_mid.abs() <= tol {
            break;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    if best.1.abs() > tol {
        return Err(Error::Solver(format!(
            "bisection stalled at x = {} with residual {:e} above tolerance {:e}",
            best.0, best.1, tol
        )));
    }
    Ok(Root { x: best.0, residual: best.1.abs(), iterations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuStar {
    pub m_star: f64,
    pub measure: WeightedMeasure,
    pub residual: f64,
    pub ess: f64,
}

impl MuStar {
    pub fn low_ess(&self) -> bool {
        self.ess < LOW_ESS_THRESHOLD
    }
}

/// Root of `Phi_hat(m) - m` from precomputed outputs. Returns `(m*, weights)`.
pub fn solve_fixed_point_outputs(outputs: &[f64], y: f64, beta: f64, cfg: &IsSolverConfig) -> Result<(Root, Vec<f64>)> {
    if outputs.is_empty() {
        return Err(Error::input("no importance samples"));
    }
    let (min, max) = outputs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(*s), hi.max(*s)));
    if !(min.is_finite() && max.is_finite()) {
        return Err(Error::Solver("sample outputs are not finite".into()));
    }
    if min == max {
        let root = Root { x: min, residual: 0.0, iterations: 0 };
        return Ok((root, vec![1.0 / outputs.len() as f64; outputs.len()]));
    }
    let root = bisect(
        |m| Ok(phi_hat_outputs(m, outputs, y, beta)?.value - m),
        min - 1.0,
        max + 1.0,
        cfg.root_tol,
        cfg.max_bracket_expansions,
    )?;
    let w = gibbs_weights(root.x, outputs, y, beta)?;
    Ok((root, w))
}

/// Importance-sampled equilibrium for an arbitrary feature map.
pub fn solve_mu_star_with<F: FeatureMap>(
    map: &F,
    samples: &SampleSet,
    z: &DataPoint,
    beta: f64,
    cfg: &IsSolverConfig,
) -> Result<MuStar> {
    cfg.validate()?;
    if !(beta > 0.0) {
        return Err(Error::input("beta must be positive"));
    }
    let outputs = samples.outputs_with(map, &z.x)?;
    let (root, w) = solve_fixed_point_outputs(&outputs, z.y, beta, cfg)?;
    let ess = effective_sample_size(&w);
    Ok(MuStar { m_star: root.x, measure: samples.weighted(w)?, residual: root.residual, ess })
}

/// Importance-sampled equilibrium for tanh neurons.
pub fn solve_mu_star(samples: &SampleSet, z: &DataPoint, beta: f64, cfg: &IsSolverConfig) -> Result<MuStar> {
    solve_mu_star_with(&TanhNeuron::new(z.x.len()), samples, z, beta, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RhoStarConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for RhoStarConfig {
    fn default() -> Self {
        RhoStarConfig { damping: 0.5, tol: 1e-6, max_iters: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoStarSolution {
    /// `<rho*, sigma(x_k, .)>` at every trajectory point.
    pub u: Vec<f64>,
    pub measure: WeightedMeasure,
    pub residual: f64,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub ess: f64,
}

/// Sample outputs on every trajectory point, row-major by sample
/// (`outputs[i * K + k] = sigma(x_k, theta_i)`).
pub fn output_matrix<F: FeatureMap>(map: &F, samples: &SampleSet, trajectory: &Trajectory) -> Result<Vec<f64>> {
    check_dim(map.param_dim(), samples.dim())?;
    check_dim(map.covariate_dim(), trajectory.covariate_dim())?;
    let k = trajectory.len();
    let mut out = Vec::with_capacity(samples.len() * k);
    for p in samples.values().chunks_exact(samples.dim()) {
        out.extend(trajectory.points().iter().map(|z| map.eval(&z.x, p)));
    }
    Ok(out)
}

/// Damped fixed-point iteration `u <- u + d (U_hat(u) - u)` starting from
/// `u = 0`, where `U_hat(u)_k = sum_i w_i(u) sigma_ik` and
/// `w_i(u) ∝ exp(-(2 / beta) (1 / K) sum_k (u_k - y_k) sigma_ik)`.
///
/// The fixed point is the unique minimizer of the strongly convex function
/// `J(u) = |u|^2 / 2 + (beta K / 2) log sum_i exp(e_i(u))`, whose gradient is
/// `u - U_hat(u)`, so each damped step is a gradient step on `J`. The damping
/// starts at `cfg.damping` and is halved whenever a step fails to decrease `J`
/// enough; at low temperature the undamped-enough map otherwise cycles.
/// Returns `(u, weights, residual trace)`.
pub fn solve_rho_star_outputs(
    outputs: &[f64],
    ys: &[f64],
    beta: f64,
    cfg: &RhoStarConfig,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    const ARMIJO: f64 = 0.25;
    const MIN_DAMPING: f64 = 1e-12;

    let k = ys.len();
    if k == 0 || outputs.is_empty() || outputs.len() % k != 0 {
        return Err(Error::input("output matrix does not match the trajectory length"));
    }
    if !(beta > 0.0) {
        return Err(Error::input("beta must be positive"));
    }
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
        return Err(Error::input(format!("damping must lie in (0, 1], got {}", cfg.damping)));
    }
    if !(cfg.tol > 0.0) || cfg.max_iters == 0 {
        return Err(Error::input("tolerance and iteration budget must be positive"));
    }
    let scale = -2.0 / (beta * k as f64);
    let dual_scale = 0.5 * beta * k as f64;
    let exponents = |du: &[f64]| -> Vec<f64> {
        outputs
            .chunks_exact(k)
            .map(|row| row.iter().zip(du).map(|(s, d)| s * scale * d).sum())
            .collect()
    };
    let weighted_outputs = |w: &[f64]| -> Vec<f64> {
        let mut acc = vec![0.0; k];
        for (wi, row) in w.iter().zip(outputs.chunks_exact(k)) {
            for (a, s) in acc.iter_mut().zip(row) {
                *a += wi * s;
            }
        }
        acc
    };

    let mut u = vec![0.0; k];
    let neg_y: Vec<f64> = ys.iter().map(|y| -y).collect();
    let mut logw = exponents(&neg_y);
    let mut w = normalize_log_weights(logw.clone())?;
    let mut grad: Vec<f64> = u.iter().zip(weighted_outputs(&w)).map(|(u, h)| u - h).collect();
    let mut residuals = Vec::new();
    let mut damping = cfg.damping;
    loop {
        let residual = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        residuals.push(residual);
        if residual <= cfg.tol {
            return Ok((u, w, residuals));
        }
        if residuals.len() >= cfg.max_iters || !residual.is_finite() {
            break;
        }
        let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
        damping = (2.0 * damping).min(cfg.damping);
        let (du, de) = loop {
            let du: Vec<f64> = grad.iter().map(|g| -damping * g).collect();
            let de = exponents(&du);
            // J(u + du) - J(u), evaluated relative to the current weights
            let tilt: f64 = w.iter().zip(&de).map(|(w, d)| w * d.exp_m1()).sum();
            let quad: f64 = du.iter().zip(&u).map(|(d, u)| d * (u + 0.5 * d)).sum();
            let change = quad + dual_scale * tilt.ln_1p();
            if change <= -ARMIJO * damping * grad_sq {
                break (du, de);
            }
            damping *= 0.5;
            if damping < MIN_DAMPING {
                return Err(Error::Convergence { iters: residuals.len(), last_residual: residual, residuals });
            }
        };
        for (u, d) in u.iter_mut().zip(&du) {
            *u += d;
        }
        for (l, d) in logw.iter_mut().zip(&de) {
            *l += d;
        }
        w = normalize_log_weights(logw.clone())?;
        grad = u.iter().zip(weighted_outputs(&w)).map(|(u, h)| u - h).collect();
    }
    Err(Error::Convergence {
        iters: residuals.len(),
        last_residual: residuals.last().copied().unwrap_or(f64::NAN),
        residuals,
    })
}

/// Importance-sampled hindsight measure over `trajectory`.
pub fn solve_rho_star_with<F: FeatureMap>(
    map: &F,
    trajectory: &Trajectory,
    samples: &SampleSet,
    beta: f64,
    cfg: &RhoStarConfig,
) -> Result<RhoStarSolution> {
    let outputs = output_matrix(map, samples, trajectory)?;
    let ys: Vec<f64> = trajectory.points().iter().map(|z| z.y).collect();
    let (u, w, residuals) = solve_rho_star_outputs(&outputs, &ys, beta, cfg)?;
    let ess = effective_sample_size(&w);
    Ok(RhoStarSolution {
        u,
        measure: samples.weighted(w)?,
        residual: *residuals.last().expect("at least one iteration"),
        iterations: residuals.len(),
        residuals,
        ess,
    })
}

pub fn solve_rho_star(trajectory: &Trajectory, samples: &SampleSet, beta: f64, cfg: &RhoStarConfig) -> Result<RhoStarSolution> {
    solve_rho_star_with(&TanhNeuron::new(trajectory.covariate_dim()), trajectory, samples, beta, cfg)
}

/// Columns `sample_id, a, w1..wn, b, weight` (or `theta1..thetad` when the
/// parameter is not a neuron).
pub fn write_weighted_csv<W: Write>(measure: &WeightedMeasure, out: W) -> Result<()> {
    use crate::model::Measure;
    let d = measure.param_dim();
    let mut header = vec!["sample_id".to_string()];
    if d >= 2 {
        header.push("a".into());
        header.extend((1..=d - 2).map(|j| format!("w{j}")));
        header.push("b".into());
    } else {
        header.extend((1..=d).map(|j| format!("theta{j}")));
    }
    header.push("weight".into());
    let csv_err = |e: csv::Error| Error::input(format!("csv write failed: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..measure.len() {
        let mut rec = vec![i.to_string()];
        rec.extend(measure.atom(i).iter().map(|v| v.to_string()));
        rec.push(measure.weight(i).to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::input(format!("csv flush failed: {e}")))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// One-parameter quadrature oracle with sigma(x, theta) = tanh(theta x).

/// Gaussian factor allowed at the grid endpoints, relative to its peak.
pub const GRID_EDGE_THRESHOLD: f64 = 1e-12;
const QUAD_ROOT_TOL: f64 = 1e-13;
const DENSITY_SUM_TOL: f64 = 1e-8;

/// Uniform grid for composite Simpson integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    lo: f64,
    hi: f64,
    points: usize,
}

impl QuadratureGrid {
    /// `points` must be odd and at least 3.
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::input(format!("invalid grid range [{lo}, {hi}]")));
        }
        if points < 3 || points % 2 == 0 {
            return Err(Error::input(format!("Simpson grid needs an odd point count >= 3, got {points}")));
        }
        Ok(QuadratureGrid { lo, hi, points })
    }

    /// Symmetric grid covering the prior `N(0, beta / lambda)` down to the
    /// endpoint threshold, with a margin.
    pub fn for_prior(beta: f64, lambda: f64, points: usize) -> Result<Self> {
        if !(beta > 0.0 && lambda > 0.0) {
            return Err(Error::input("beta and lambda must be positive"));
        }
        let half = 1.25 * (2.0 * beta / lambda * (1.0 / GRID_EDGE_THRESHOLD).ln()).sqrt();
        Self::new(-half, half, points)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points).map(|i| self.lo + i as f64 * h).collect()
    }

    pub fn simpson_weights(&self) -> Vec<f64> {
        let h = self.step() / 3.0;
        (0..self.points)
            .map(|i| {
                if i == 0 || i == self.points - 1 {
                    h
                } else if i % 2 == 1 {
                    4.0 * h
                } else {
                    2.0 * h
                }
            })
            .collect()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.simpson_weights().iter().zip(values).map(|(w, v)| w * v).sum()
    }

    fn check_covers_prior(&self, beta: f64, lambda: f64) -> Result<()> {
        let edge = self.lo.abs().min(self.hi.abs());
        let weight = (-lambda * edge * edge / (2.0 * beta)).exp();
        if weight > GRID_EDGE_THRESHOLD || self.lo > 0.0 || self.hi < 0.0 {
            return Err(Error::GridTooNarrow { weight, threshold: GRID_EDGE_THRESHOLD });
        }
        Ok(())
    }
}

/// A density tabulated on a quadrature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub grid: QuadratureGrid,
    pub values: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: QuadratureGrid, values: Vec<f64>) -> Result<Self> {
        check_dim(grid.points(), values.len())?;
        Ok(GridDensity { grid, values })
    }

    /// Rescales to unit Simpson mass.
    pub fn normalized(grid: QuadratureGrid, values: Vec<f64>) -> Result<Self> {
        let mass = grid.integrate(&values);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::input(format!("density mass {mass} cannot be normalized")));
        }
        Self::new(grid, values.into_iter().map(|v| v / mass).collect())
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// `int f(theta) rho(theta) dtheta`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        let nodes = self.grid.nodes();
        let vals: Vec<f64> = nodes.iter().zip(&self.values).map(|(t, r)| f(*t) * r).collect();
        self.grid.integrate(&vals)
    }

    /// `int rho log rho` with `0 log 0 = 0`.
    pub fn neg_entropy(&self) -> f64 {
        let vals: Vec<f64> = self.values.iter().map(|r| if *r > 0.0 { r * r.ln() } else { 0.0 }).collect();
        self.grid.integrate(&vals)
    }

    fn validate_probability(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite() || *v < -1e-14) {
            return Err(Error::input("density has negative or non-finite entries"));
        }
        let mass = self.mass();
        if (mass - 1.0).abs() > DENSITY_SUM_TOL {
            return Err(Error::input(format!("density integrates to {mass}, not 1")));
        }
        Ok(())
    }
}

fn scalar_sigma(x: f64, theta: f64) -> f64 {
    ScalarTanh.eval(&[x], &[theta])
}

fn check_scalar(z: &DataPoint) -> Result<f64> {
    check_dim(1, z.x.len())?;
    Ok(z.x[0])
}

/// Normalized Gibbs density on the grid at level `m`.
fn gibbs_density(grid: &QuadratureGrid, x: f64, y: f64, m: f64, beta: f64, lambda: f64) -> Result<GridDensity> {
    let logp: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|t| -lambda * t * t / (2.0 * beta) - 2.0 / beta * (m - y) * scalar_sigma(x, *t))
        .collect();
    let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    GridDensity::normalized(*grid, logp.into_iter().map(|l| (l - max).exp()).collect())
}

/// `Phi(m)` by quadrature.
pub fn phi_quadrature(grid: &QuadratureGrid, z: &DataPoint, m: f64, beta: f64, lambda: f64) -> Result<f64> {
    let x = check_scalar(z)?;
    Ok(gibbs_density(grid, x, z.y, m, beta, lambda)?.expect(|t| scalar_sigma(x, t)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureMuStar {
    pub m_star: f64,
    pub density: GridDensity,
}

/// Equilibrium for `sigma(x, theta) = tanh(theta x)` by Simpson quadrature and
/// bisection to near machine precision.
pub fn solve_mu_star_quadrature(grid: &QuadratureGrid, z: &DataPoint, beta: f64, lambda: f64) -> Result<QuadratureMuStar> {
    let x = check_scalar(z)?;
    if !(beta > 0.0 && lambda > 0.0) {
        return Err(Error::input("quadrature oracle needs beta > 0 and lambda > 0"));
    }
    grid.check_covers_prior(beta, lambda)?;
    let root = bisect(|m| Ok(phi_quadrature(grid, z, m, beta, lambda)? - m), -2.0, 2.0, QUAD_ROOT_TOL, 8)?;
    Ok(QuadratureMuStar { m_star: root.x, density: gibbs_density(grid, x, z.y, root.x, beta, lambda)? })
}

/// `F(rho) = m^2 - 2 y m + (lambda / 2) <rho, theta^2> + beta int rho log rho`.
pub fn quadrature_free_energy(density: &GridDensity, z: &DataPoint, beta: f64, lambda: f64) -> Result<f64> {
    let x = check_scalar(z)?;
    density.validate_probability()?;
    let m = density.expect(|t| scalar_sigma(x, t));
    let second = density.expect(|t| t * t);
    Ok(m * m - 2.0 * z.y * m + 0.5 * lambda * second + beta * density.neg_entropy())
}

/// `int rho log(rho / mu)` on a shared grid.
pub fn quadrature_kl(rho: &GridDensity, mu: &GridDensity) -> Result<f64> {
    if rho.grid != mu.grid {
        return Err(Error::input("densities live on different grids"));
    }
    let vals: Vec<f64> = rho
        .values
        .iter()
        .zip(&mu.values)
        .map(|(r, m)| if *r > 0.0 { r * (r / m).ln() } else { 0.0 })
        .collect();
    Ok(rho.grid.integrate(&vals))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub error: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        IdentityCheck { lhs, rhs, error: (lhs - rhs).abs() }
    }
}

/// Free-energy gap `F(rho) - F(mu*)` against
/// `(<rho, sigma> - <mu*, sigma>)^2 + beta KL(rho | mu*)`.
pub fn verify_gap_decomposition(density: &GridDensity, z: &DataPoint, beta: f64, lambda: f64) -> Result<IdentityCheck> {
    let x = check_scalar(z)?;
    if density.values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::input("gap decomposition needs a strictly positive density"));
    }
    let mu = solve_mu_star_quadrature(&density.grid, z, beta, lambda)?;
    let lhs = quadrature_free_energy(density, z, beta, lambda)? - quadrature_free_energy(&mu.density, z, beta, lambda)?;
    let m_rho = density.expect(|t| scalar_sigma(x, t));
    let m_mu = mu.density.expect(|t| scalar_sigma(x, t));
    let rhs = (m_rho - m_mu).powi(2) + beta * quadrature_kl(density, &mu.density)?;
    Ok(IdentityCheck::new(lhs, rhs))
}

/// Sensitivity of `m*` to the response: `2 Var / (beta + 2 Var)` against a
/// central difference with step `h`. `lhs` is the analytic value.
pub fn verify_dym_formula(grid: &QuadratureGrid, z: &DataPoint, beta: f64, lambda: f64, h: f64) -> Result<IdentityCheck> {
    let x = check_scalar(z)?;
    if !(h > 0.0) {
        return Err(Error::input("finite-difference step must be positive"));
    }
    let mu = solve_mu_star_quadrature(grid, z, beta, lambda)?;
    let mean = mu.density.expect(|t| scalar_sigma(x, t));
    let var = (mu.density.expect(|t| scalar_sigma(x, t).powi(2)) - mean * mean).max(0.0);
    let analytic = 2.0 * var / (beta + 2.0 * var);
    let up = solve_mu_star_quadrature(grid, &DataPoint::new(z.x.clone(), z.y + h), beta, lambda)?;
    let down = solve_mu_star_quadrature(grid, &DataPoint::new(z.x.clone(), z.y - h), beta, lambda)?;
    Ok(IdentityCheck::new(analytic, (up.m_star - down.m_star) / (2.0 * h)))
}
