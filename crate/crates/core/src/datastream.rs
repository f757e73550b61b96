//! Data-generating diffusions simulated on a uniform grid by Euler-Maruyama.
//!
//! Two scenarios are provided: a periodic regression with a one-dimensional
//! OU covariate and coefficient `sin(h t)`, and a drifting nonlinear response
//! `f_t(x) = (scale / M) sum_m sigma(x, phi_t^m)` whose neuron parameters are
//! themselves OU processes.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DataPoint, FeatureMap, TanhNeuron, Theta, TruncationSpec};
use crate::rng::{standard_normal, SeedTree, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub rate: f64,
    pub mean: f64,
    pub vol: f64,
}

impl OuParams {
    pub fn new(rate: f64, mean: f64, vol: f64) -> Result<Self> {
        let p = OuParams { rate, mean, vol };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(Error::input(format!("OU rate must be >= 0, got {}", self.rate)));
        }
        if !(self.vol >= 0.0 && self.vol.is_finite()) {
            return Err(Error::input(format!("OU volatility must be >= 0, got {}", self.vol)));
        }
        if !self.mean.is_finite() {
            return Err(Error::input("OU mean must be finite"));
        }
        Ok(())
    }

    /// Variance of the continuous-time stationary law, `vol^2 / (2 rate)`.
    pub fn stationary_variance(&self) -> Option<f64> {
        if self.vol == 0.0 {
            Some(0.0)
        } else if self.rate > 0.0 {
            Some(self.vol * self.vol / (2.0 * self.rate))
        } else {
            None
        }
    }

    #[inline]
    fn step(&self, x: f64, dt: f64, sqrt_dt: f64, xi: f64) -> f64 {
        x - self.rate * (x - self.mean) * dt + self.vol * sqrt_dt * xi
    }
}

/// Initial condition of an OU component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuStart {
    /// Draw from `N(mean, vol^2 / (2 rate))`.
    Stationary,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuSpec {
    pub params: OuParams,
    pub start: OuStart,
}

impl OuSpec {
    fn initial(&self, rng: &mut Stream) -> Result<f64> {
        match self.start {
            OuStart::Fixed(v) => Ok(v),
            OuStart::Stationary => {
                let var = self.params.stationary_variance().ok_or_else(|| {
                    Error::input("stationary start needs a positive rate when vol > 0")
                })?;
                Ok(self.params.mean + var.sqrt() * standard_normal(rng))
            }
        }
    }
}

/// Euler-Maruyama path of a scalar OU process. Returns `steps + 1` values,
/// starting with `x0`.
pub fn euler_ou_path<R: Rng + ?Sized>(
    params: &OuParams,
    x0: f64,
    steps: usize,
    dt: f64,
    noise: &mut R,
) -> Result<Vec<f64>> {
    params.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::input(format!("time step must be positive, got {dt}")));
    }
    if steps == 0 {
        return Err(Error::input("need at least one step"));
    }
    let sqrt_dt = dt.sqrt();
    let mut path = Vec::with_capacity(steps + 1);
    let mut x = x0;
    path.push(x);
    for _ in 0..steps {
        let xi: f64 = noise.sample(rand_distr::StandardNormal);
        x = params.step(x, dt, sqrt_dt, xi);
        path.push(x);
    }
    Ok(path)
}

/// `dim` independent OU coordinates driven by one stream. Returns
/// `(steps + 1) * dim` values, time-major.
fn ou_vector_path(spec: &OuSpec, dim: usize, steps: usize, dt: f64, rng: &mut Stream) -> Result<Vec<f64>> {
    let sqrt_dt = dt.sqrt();
    let mut out = Vec::with_capacity((steps + 1) * dim);
    for _ in 0..dim {
        out.push(spec.initial(rng)?);
    }
    for k in 0..steps {
        for j in 0..dim {
            let x = out[k * dim + j];
            out.push(spec.params.step(x, dt, sqrt_dt, standard_normal(rng)));
        }
    }
    Ok(out)
}

/// Observations at `t_k = k dt`, `k = 1..K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    dt: f64,
    points: Vec<DataPoint>,
    truth: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn new(dt: f64, points: Vec<DataPoint>, truth: Option<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::input(format!("time step must be positive, got {dt}")));
        }
        if let Some(first) = points.first() {
            let n = first.x.len();
            for (k, p) in points.iter().enumerate() {
                if p.x.len() != n {
                    return Err(Error::input(format!("point {k} has covariate dimension {}", p.x.len())));
                }
                if !p.y.is_finite() || p.x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::input(format!("point {k} is not finite")));
                }
            }
        }
        if let Some(t) = &truth {
            if t.len() != points.len() {
                return Err(Error::input("truth channel length differs from point count"));
            }
        }
        Ok(Trajectory { dt, points, truth })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Time of the point with 0-based storage index `i`.
    pub fn time(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn truth(&self) -> Option<&[f64]> {
        self.truth.as_deref()
    }

    pub fn covariate_dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.x.len())
    }

    /// Time average of `y^2` over the grid.
    pub fn mean_square_response(&self) -> f64 {
        self.points.iter().map(|p| p.y * p.y).sum::<f64>() / self.len().max(1) as f64
    }

    pub fn csv_header(n: usize) -> Vec<String> {
        let mut h = vec!["k".to_string(), "t".to_string()];
        h.extend((1..=n).map(|j| format!("x{j}")));
        h.push("y".into());
        h.push("truth".into());
        h
    }

    /// Columns `k, t, x1..xn, y, truth`; `truth` is empty when absent.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::input(format!("csv write failed: {e}"));
        w.write_record(Self::csv_header(self.covariate_dim())).map_err(csv_err)?;
        for (i, p) in self.points.iter().enumerate() {
            let mut rec = vec![(i + 1).to_string(), self.time(i).to_string()];
            rec.extend(p.x.iter().map(|v| v.to_string()));
            rec.push(p.y.to_string());
            rec.push(self.truth.as_ref().map_or(String::new(), |t| t[i].to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::input(format!("csv flush failed: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let bad = |msg: String| Error::input(format!("malformed trajectory csv: {msg}"));
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.len() < 4 {
            return Err(bad("too few columns".into()));
        }
        let n = header.len() - 4;
        let expected = Self::csv_header(n);
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let mut points = Vec::new();
        let mut truth = Vec::new();
        let mut times = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let num = |i: usize| -> Result<f64> { rec[i].parse::<f64>().map_err(|e| bad(e.to_string())) };
            times.push(num(1)?);
            let x = (0..n).map(|j| num(2 + j)).collect::<Result<Vec<_>>>()?;
            points.push(DataPoint::new(x, num(2 + n)?));
            if !rec[3 + n].is_empty() {
                truth.push(num(3 + n)?);
            }
        }
        let dt = times.first().copied().ok_or_else(|| bad("no rows".into()))?;
        let truth = if truth.is_empty() { None } else { Some(truth) };
        Trajectory::new(dt, points, truth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeriodicConfig {
    pub dt: f64,
    pub steps: usize,
    pub frequency: f64,
    pub covariate: OuSpec,
    pub noise: OuSpec,
    pub truncation: TruncationSpec,
}

impl Default for PeriodicConfig {
    fn default() -> Self {
        PeriodicConfig {
            dt: 0.02,
            steps: 1000,
            frequency: 0.3,
            covariate: OuSpec { params: OuParams { rate: 0.5, mean: 0.0, vol: 1.0 }, start: OuStart::Stationary },
            noise: OuSpec { params: OuParams { rate: 1.5, mean: 0.0, vol: 0.25 }, start: OuStart::Fixed(0.0) },
            truncation: TruncationSpec::default(),
        }
    }
}

fn validate_grid(dt: f64, steps: usize) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::input(format!("time step must be positive, got {dt}")));
    }
    if steps == 0 {
        return Err(Error::input("need at least one step"));
    }
    Ok(())
}

impl PeriodicConfig {
    pub fn validate(&self) -> Result<()> {
        validate_grid(self.dt, self.steps)?;
        self.covariate.params.validate()?;
        self.noise.params.validate()?;
        self.truncation.validate()
    }
}

fn periodic_stream(cfg: &PeriodicConfig, x_rng: &mut Stream, noise_rng: &mut Stream) -> Result<Trajectory> {
    let xs = ou_vector_path(&cfg.covariate, 1, cfg.steps, cfg.dt, x_rng)?;
    let xis = ou_vector_path(&cfg.noise, 1, cfg.steps, cfg.dt, noise_rng)?;
    let mut points = Vec::with_capacity(cfg.steps);
    let mut truth = Vec::with_capacity(cfg.steps);
    for k in 1..=cfg.steps {
        let t = k as f64 * cfg.dt;
        let signal = (cfg.frequency * t).sin() * xs[k];
        points.push(DataPoint::scalar(xs[k], cfg.truncation.apply(signal + xis[k])));
        truth.push(signal);
    }
    Trajectory::new(cfg.dt, points, Some(truth))
}

/// Train and test streams with independent covariate and noise paths and the
/// same coefficient `sin(h t)`.
pub fn gen_periodic(cfg: &PeriodicConfig, seed: u64) -> Result<(Trajectory, Trajectory)> {
    cfg.validate()?;
    let tree = SeedTree::new(seed);
    let train = periodic_stream(cfg, &mut tree.stream("train-x", 0), &mut tree.stream("train-noise", 0))?;
    let test = periodic_stream(cfg, &mut tree.stream("test-x", 0), &mut tree.stream("test-noise", 0))?;
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NonlinearConfig {
    pub dt: f64,
    pub steps: usize,
    pub covariate_dim: usize,
    pub covariate: OuSpec,
    pub noise: OuSpec,
    /// Number of ground-truth neurons M.
    pub neurons: usize,
    /// Output factor; the truth is `(output_scale / M) sum_m sigma`.
    pub output_scale: f64,
    pub phi_rate: f64,
    pub phi_vol: f64,
    /// Standard deviation of the entries of `phi_0`.
    pub phi_init_sd: f64,
    /// Standard deviation of the entries of the mean levels `phi_bar`.
    pub phi_mean_sd: f64,
    pub truncation: TruncationSpec,
}

impl Default for NonlinearConfig {
    fn default() -> Self {
        NonlinearConfig {
            dt: 0.02,
            steps: 1000,
            covariate_dim: 3,
            covariate: OuSpec { params: OuParams { rate: 0.7, mean: 0.0, vol: 0.7 }, start: OuStart::Stationary },
            noise: OuSpec { params: OuParams { rate: 5.0, mean: 0.0, vol: 0.2 }, start: OuStart::Fixed(0.0) },
            neurons: 100,
            output_scale: 2.5,
            phi_rate: 0.6,
            phi_vol: 0.9,
            phi_init_sd: 0.8,
            phi_mean_sd: 0.8,
            truncation: TruncationSpec::default(),
        }
    }
}

impl NonlinearConfig {
    pub fn validate(&self) -> Result<()> {
        validate_grid(self.dt, self.steps)?;
        self.covariate.params.validate()?;
        self.noise.params.validate()?;
        OuParams::new(self.phi_rate, 0.0, self.phi_vol)?;
        if self.neurons == 0 {
            return Err(Error::input("need at least one ground-truth neuron"));
        }
        if self.covariate_dim == 0 {
            return Err(Error::input("covariate dimension must be positive"));
        }
        if !(self.phi_init_sd >= 0.0 && self.phi_mean_sd >= 0.0) {
            return Err(Error::input("phi standard deviations must be >= 0"));
        }
        self.truncation.validate()
    }
}

/// Ground-truth drifting network shared by the train and test streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearTruthModel {
    neurons: usize,
    covariate_dim: usize,
    /// Per-neuron factor `output_scale / M`.
    scale: f64,
    phi_bar: Vec<Theta>,
    /// `(steps + 1) * neurons * (covariate_dim + 2)` values, time-major.
    phi: Vec<f64>,
    steps: usize,
}

impl NonlinearTruthModel {
    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn phi_bar(&self) -> &[Theta] {
        &self.phi_bar
    }

    fn param_dim(&self) -> usize {
        self.covariate_dim + 2
    }

    /// Parameters of neuron `m` at grid index `k` (`k = 0` is the initial value).
    pub fn phi(&self, k: usize, m: usize) -> Theta {
        let d = self.param_dim();
        let start = (k * self.neurons + m) * d;
        Theta::from_flat(&self.phi[start..start + d]).expect("d >= 2")
    }

    /// `f_{t_k}(x)`.
    pub fn eval(&self, k: usize, x: &[f64]) -> f64 {
        let d = self.param_dim();
        let neuron = TanhNeuron::new(self.covariate_dim);
        let row = &self.phi[k * self.neurons * d..(k + 1) * self.neurons * d];
        self.scale * row.chunks_exact(d).map(|p| neuron.eval(x, p)).sum::<f64>()
    }
}

fn nonlinear_truth(cfg: &NonlinearConfig, tree: &SeedTree) -> Result<NonlinearTruthModel> {
    let d = cfg.covariate_dim + 2;
    let m = cfg.neurons;
    let mut init_rng = tree.stream("phi-init", 0);
    let mut phi0 = Vec::with_capacity(m * d);
    let mut bar = Vec::with_capacity(m * d);
    for _ in 0..m * d {
        phi0.push(cfg.phi_init_sd * standard_normal(&mut init_rng));
    }
    for _ in 0..m * d {
        bar.push(cfg.phi_mean_sd * standard_normal(&mut init_rng));
    }

    let mut path_rng = tree.stream("phi-path", 0);
    let sqrt_dt = cfg.dt.sqrt();
    let mut phi = Vec::with_capacity((cfg.steps + 1) * m * d);
    phi.extend_from_slice(&phi0);
    for k in 0..cfg.steps {
        for j in 0..m * d {
            let cur = phi[k * m * d + j];
            let ou = OuParams { rate: cfg.phi_rate, mean: bar[j], vol: cfg.phi_vol };
            phi.push(ou.step(cur, cfg.dt, sqrt_dt, standard_normal(&mut path_rng)));
        }
    }

    Ok(NonlinearTruthModel {
        neurons: m,
        covariate_dim: cfg.covariate_dim,
        scale: cfg.output_scale / m as f64,
        phi_bar: bar.chunks_exact(d).map(|p| Theta::from_flat(p).expect("d >= 2")).collect(),
        phi,
        steps: cfg.steps,
    })
}

fn nonlinear_stream(
    cfg: &NonlinearConfig,
    truth: &NonlinearTruthModel,
    x_rng: &mut Stream,
    noise_rng: &mut Stream,
) -> Result<Trajectory> {
    let n = cfg.covariate_dim;
    let xs = ou_vector_path(&cfg.covariate, n, cfg.steps, cfg.dt, x_rng)?;
    let xis = ou_vector_path(&cfg.noise, 1, cfg.steps, cfg.dt, noise_rng)?;
    let mut points = Vec::with_capacity(cfg.steps);
    let mut signal = Vec::with_capacity(cfg.steps);
    for k in 1..=cfg.steps {
        let x = xs[k * n..(k + 1) * n].to_vec();
        let f = truth.eval(k, &x);
        points.push(DataPoint::new(x, cfg.truncation.apply(f + xis[k])));
        signal.push(f);
    }
    Trajectory::new(cfg.dt, points, Some(signal))
}

/// One shared truth path; train and test get independent covariates and
/// observation noise on top of it.
pub fn gen_nonlinear(cfg: &NonlinearConfig, seed: u64) -> Result<(Trajectory, Trajectory, NonlinearTruthModel)> {
    cfg.validate()?;
    let tree = SeedTree::new(seed);
    let truth = nonlinear_truth(cfg, &tree)?;
    let train = nonlinear_stream(cfg, &truth, &mut tree.stream("train-x", 0), &mut tree.stream("train-noise", 0))?;
    let test = nonlinear_stream(cfg, &truth, &mut tree.stream("test-x", 0), &mut tree.stream("test-noise", 0))?;
    Ok((train, test, truth))
}

/// Scenario selector shared by the experiment drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Periodic(PeriodicConfig),
    Nonlinear(NonlinearConfig),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Periodic(_) => "periodic",
            Scenario::Nonlinear(_) => "nonlinear",
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            Scenario::Periodic(c) => c.dt,
            Scenario::Nonlinear(c) => c.dt,
        }
    }

    /// `(train, test)` for one instance.
    pub fn generate(&self, seed: u64) -> Result<(Trajectory, Trajectory)> {
        match self {
            Scenario::Periodic(c) => gen_periodic(c, seed),
            Scenario::Nonlinear(c) => gen_nonlinear(c, seed).map(|(a, b, _)| (a, b)),
        }
    }
}
