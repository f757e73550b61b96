//! Online noisy particle gradient descent.
//!
//! Each particle follows the Euler-Maruyama step
//!
//! ```text
//! theta' = theta + [-lambda theta - 2 (m - y) grad sigma(x, theta)] dt + sqrt(2 beta dt) xi
//! ```
//!
//! where `m` is the network prediction at `x`: the full-ensemble mean when the
//! self-interaction term is kept, or the mean over the other `N - 1` particles
//! when it is removed. The shared prediction is computed once per step before
//! any particle moves.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::datastream::Trajectory;
use crate::error::{Error, Result};
use crate::model::{DataPoint, FeatureMap, Measure, TanhNeuron, Theta};
use crate::rng::{fill_standard_normal, standard_normal, SeedTree, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnpgdConfig {
    pub particles: usize,
    pub lambda: f64,
    pub beta: f64,
    pub dt: f64,
    pub self_interaction: bool,
    /// Initial per-coordinate standard deviation. Defaults to
    /// `sqrt(beta / lambda)`, the invariant Gaussian of the confinement.
    pub init_sd: Option<f64>,
}

impl Default for OnpgdConfig {
    fn default() -> Self {
        OnpgdConfig { particles: 80, lambda: 0.1, beta: 0.02, dt: 0.02, self_interaction: true, init_sd: None }
    }
}

impl OnpgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::input(format!("dt must be positive, got {}", self.dt)));
        }
        if self.particles == 0 {
            return Err(Error::input("need at least one particle"));
        }
        if !self.self_interaction && self.particles < 2 {
            return Err(Error::input("leave-one-out interaction needs at least two particles"));
        }
        if !(self.lambda >= 0.0 && self.beta >= 0.0) {
            return Err(Error::input("lambda and beta must be >= 0"));
        }
        Ok(())
    }

    pub fn initial_sd(&self) -> Result<f64> {
        match self.init_sd {
            Some(sd) if sd >= 0.0 && sd.is_finite() => Ok(sd),
            Some(sd) => Err(Error::input(format!("initial sd must be >= 0, got {sd}"))),
            None if self.lambda > 0.0 && self.beta > 0.0 => Ok((self.beta / self.lambda).sqrt()),
            None => Err(Error::input("Gaussian initialization needs lambda > 0 and beta > 0, or an explicit sd")),
        }
    }
}

/// `N` particles of dimension `d`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    dim: usize,
    params: Vec<f64>,
    step: usize,
}

impl ParticleEnsemble {
    pub fn from_flat(dim: usize, params: Vec<f64>) -> Result<Self> {
        if dim < 2 || params.is_empty() || params.len() % dim != 0 {
            return Err(Error::input("parameters do not form whole particles"));
        }
        Ok(ParticleEnsemble { dim, params, step: 0 })
    }

    pub fn from_thetas(thetas: &[Theta]) -> Result<Self> {
        let dim = thetas.first().map(Theta::dim).ok_or_else(|| Error::input("no particles"))?;
        if thetas.iter().any(|t| t.dim() != dim) {
            return Err(Error::input("particles have mixed dimensions"));
        }
        Self::from_flat(dim, thetas.iter().flat_map(Theta::flatten).collect())
    }

    pub fn particles(&self) -> usize {
        self.params.len() / self.dim
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn theta(&self, i: usize) -> Theta {
        Theta::from_flat(self.atom(i)).expect("dim >= 2")
    }

    pub fn covariate_dim(&self) -> usize {
        self.dim - 2
    }

    pub fn max_abs(&self) -> f64 {
        self.params.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Particles reordered so that new particle `i` is old particle `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut params = Vec::with_capacity(self.params.len());
        for &j in perm {
            params.extend_from_slice(self.atom(j));
        }
        ParticleEnsemble { dim: self.dim, params, step: self.step }
    }
}

impl Measure for ParticleEnsemble {
    fn param_dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.particles()
    }

    fn atom(&self, i: usize) -> &[f64] {
        &self.params[i * self.dim..(i + 1) * self.dim]
    }

    fn weight(&self, _i: usize) -> f64 {
        1.0 / self.particles() as f64
    }

    fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.params.chunks_exact(self.dim).map(&mut f).sum::<f64>() / self.particles() as f64
    }
}

/// i.i.d. `N(0, sd^2)` particles (sd from the config, `sqrt(beta/lambda)` by
/// default).
pub fn init_ensemble(cfg: &OnpgdConfig, covariate_dim: usize, seed: u64) -> Result<ParticleEnsemble> {
    cfg.validate()?;
    let sd = cfg.initial_sd()?;
    let dim = covariate_dim + 2;
    let mut rng = SeedTree::new(seed).stream("onpgd-init", 0);
    let params = (0..cfg.particles * dim).map(|_| sd * standard_normal(&mut rng)).collect();
    ParticleEnsemble::from_flat(dim, params)
}

/// One independent Gaussian stream per particle, so a particle's noise does not
/// depend on how the other particles are scheduled.
#[derive(Debug, Clone)]
pub struct ParticleNoise {
    streams: Vec<Stream>,
}

impl ParticleNoise {
    pub fn new(seed: u64, particles: usize) -> Self {
        let tree = SeedTree::new(seed);
        ParticleNoise { streams: (0..particles).map(|i| tree.stream("onpgd-noise", i as u64)).collect() }
    }

    pub fn from_streams(streams: Vec<Stream>) -> Self {
        ParticleNoise { streams }
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    /// Streams reordered to follow a particle permutation.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        ParticleNoise { streams: perm.iter().map(|&j| self.streams[j].clone()).collect() }
    }

    fn draw(&mut self, dim: usize, out: &mut [f64]) {
        for (stream, chunk) in self.streams.iter_mut().zip(out.chunks_exact_mut(dim)) {
            fill_standard_normal(stream, chunk);
        }
    }
}

/// Advances the ensemble by one step with explicit standard-normal increments
/// (`N * d` values, row-major).
pub fn step_with_increments(
    ensemble: &mut ParticleEnsemble,
    z: &DataPoint,
    cfg: &OnpgdConfig,
    increments: &[f64],
) -> Result<()> {
    let n_particles = ensemble.particles();
    let dim = ensemble.dim;
    if z.x.len() + 2 != dim {
        return Err(Error::Dimension { expected: dim - 2, got: z.x.len() });
    }
    if increments.len() != ensemble.params.len() {
        return Err(Error::input("one increment per particle coordinate is required"));
    }
    if !cfg.self_interaction && n_particles < 2 {
        return Err(Error::input("leave-one-out interaction needs at least two particles"));
    }
    let neuron = TanhNeuron::new(z.x.len());

    let outputs: Vec<f64> = ensemble.params.chunks_exact(dim).map(|p| neuron.eval(&z.x, p)).collect();
    let total: f64 = outputs.iter().sum();
    let full_mean = total / n_particles as f64;

    let noise_scale = (2.0 * cfg.beta * cfg.dt).sqrt();
    let mut grad = vec![0.0; dim];
    let next_step = ensemble.step + 1;
    for (i, (p, xi)) in ensemble
        .params
        .chunks_exact_mut(dim)
        .zip(increments.chunks_exact(dim))
        .enumerate()
    {
        let mean = if cfg.self_interaction {
            full_mean
        } else {
            (total - outputs[i]) / (n_particles - 1) as f64
        };
        let err = 2.0 * (mean - z.y);
        neuron.grad(&z.x, p, &mut grad);
        for j in 0..dim {
            let drift = -cfg.lambda * p[j] - err * grad[j];
            p[j] += drift * cfg.dt + noise_scale * xi[j];
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { particle: i, step: next_step });
        }
    }
    ensemble.step = next_step;
    Ok(())
}

pub fn step(ensemble: &mut ParticleEnsemble, z: &DataPoint, cfg: &OnpgdConfig, noise: &mut ParticleNoise) -> Result<()> {
    if noise.len() != ensemble.particles() {
        return Err(Error::input("one noise stream per particle is required"));
    }
    let mut xi = vec![0.0; ensemble.params.len()];
    if cfg.beta > 0.0 {
        noise.draw(ensemble.dim, &mut xi);
    }
    step_with_increments(ensemble, z, cfg, &xi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Number of updates applied.
    pub k: usize,
    pub ensemble: ParticleEnsemble,
}

/// Drives the learner along `trajectory`, calling `observe(k, ensemble)` at
/// `k = 0` and after every update. Update `k` consumes data point `k`
/// (1-based). Returns the final ensemble.
pub fn run_online_with<F>(trajectory: &Trajectory, cfg: &OnpgdConfig, seed: u64, mut observe: F) -> Result<ParticleEnsemble>
where
    F: FnMut(usize, &ParticleEnsemble) -> Result<()>,
{
    cfg.validate()?;
    if trajectory.is_empty() {
        return Err(Error::input("empty trajectory"));
    }
    if (trajectory.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(Error::input(format!(
            "learner dt {} differs from trajectory dt {}",
            cfg.dt,
            trajectory.dt()
        )));
    }
    let mut ensemble = init_ensemble(cfg, trajectory.covariate_dim(), seed)?;
    let mut noise = ParticleNoise::new(seed, cfg.particles);
    observe(0, &ensemble)?;
    for (i, z) in trajectory.points().iter().enumerate() {
        step(&mut ensemble, z, cfg, &mut noise)?;
        observe(i + 1, &ensemble)?;
    }
    Ok(ensemble)
}

/// Snapshots at `k = 0, s, 2s, ...` plus the final update.
pub fn run_online(trajectory: &Trajectory, cfg: &OnpgdConfig, seed: u64, snapshot_every: usize) -> Result<Vec<Snapshot>> {
    if snapshot_every == 0 {
        return Err(Error::input("snapshot interval must be positive"));
    }
    let last = trajectory.len();
    let mut snaps = Vec::new();
    run_online_with(trajectory, cfg, seed, |k, ens| {
        if k % snapshot_every == 0 || k == last {
            snaps.push(Snapshot { k, ensemble: ens.clone() });
        }
        Ok(())
    })?;
    Ok(snaps)
}

/// Columns `k, particle_id, a, w1..wn, b`.
pub fn write_snapshots_csv<W: Write>(snapshots: &[Snapshot], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::input(format!("csv write failed: {e}"));
    let n = snapshots.first().map_or(0, |s| s.ensemble.covariate_dim());
    let mut header = vec!["k".to_string(), "particle_id".into(), "a".into()];
    header.extend((1..=n).map(|j| format!("w{j}")));
    header.push("b".into());
    w.write_record(&header).map_err(csv_err)?;
    for s in snapshots {
        for (i, p) in s.ensemble.params.chunks_exact(s.ensemble.dim).enumerate() {
            let mut rec = vec![s.k.to_string(), i.to_string()];
            rec.extend(p.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::input(format!("csv flush failed: {e}")))?;
    Ok(())
}
