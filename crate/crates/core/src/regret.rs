//! Empirical regret of the particle learner against equilibrium benchmarks.
//!
//! Regret is evaluated on a subgrid of the data grid. At subgrid index `k`
//! (1-based data index) the learner's ensemble is the one that has consumed
//! `z_1..z_{k-1}`, so it is scored on data it has not trained on yet. The
//! dynamic benchmark is the importance-sampled equilibrium at `z_k`; the
//! static benchmark is the hindsight measure over the whole trajectory.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::datastream::Trajectory;
use crate::equilibrium::{solve_mu_star, solve_rho_star, IsSolverConfig, RhoStarConfig, SampleSet};
use crate::error::{Error, Result};
use crate::measures::{cost_u, cost_u_unreg};
use crate::model::{DataPoint, Measure};
use crate::onpgd::{run_online_with, OnpgdConfig, ParticleEnsemble};
use crate::rng::SeedTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Regularized,
    Unregularized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Dynamic,
    Static,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Regularized => "regularized",
            Variant::Unregularized => "unregularized",
        })
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Benchmark::Dynamic => "dynamic",
            Benchmark::Static => "static",
        })
    }
}

/// `U(ensemble, z) - U(benchmark, z)` in the chosen variant.
pub fn instantaneous_regret<A: Measure, B: Measure>(
    ensemble: &A,
    benchmark: &B,
    z: &DataPoint,
    lambda: f64,
    variant: Variant,
) -> Result<f64> {
    Ok(match variant {
        Variant::Regularized => cost_u(ensemble, z, lambda)? - cost_u(benchmark, z, lambda)?,
        Variant::Unregularized => cost_u_unreg(ensemble, z)? - cost_u_unreg(benchmark, z)?,
    })
}

/// Running trapezoidal integral of `values` over `times`, starting at 0.
pub fn cumulative_regret(times: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::input("times and values must be nonempty and of equal length"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::input("times must be strictly increasing"));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    out.push(acc);
    for i in 1..times.len() {
        acc += 0.5 * (values[i - 1] + values[i]) * (times[i] - times[i - 1]);
        out.push(acc);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSeries {
    pub variant: Variant,
    pub benchmark: Benchmark,
    pub times: Vec<f64>,
    pub instantaneous: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl RegretSeries {
    pub fn new(variant: Variant, benchmark: Benchmark, times: Vec<f64>, instantaneous: Vec<f64>) -> Result<Self> {
        let cumulative = cumulative_regret(&times, &instantaneous)?;
        Ok(RegretSeries { variant, benchmark, times, instantaneous, cumulative })
    }

    pub fn final_cumulative(&self) -> f64 {
        *self.cumulative.last().expect("series is nonempty")
    }
}

/// Data indices (1-based) `{1, s, 2s, ..., K}`.
pub fn subgrid(len: usize, stride: usize) -> Result<Vec<usize>> {
    if len == 0 || stride == 0 {
        return Err(Error::input("subgrid needs a nonempty grid and a positive stride"));
    }
    let mut idx = vec![1];
    idx.extend((1..=len / stride).map(|j| j * stride).filter(|k| *k > 1));
    if *idx.last().expect("nonempty") != len {
        idx.push(len);
    }
    Ok(idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegretConfig {
    pub onpgd: OnpgdConfig,
    pub is: IsSolverConfig,
    pub rho_star: RhoStarConfig,
    pub eval_stride: usize,
    pub static_benchmark: bool,
}

impl Default for RegretConfig {
    fn default() -> Self {
        RegretConfig {
            onpgd: OnpgdConfig::default(),
            is: IsSolverConfig::default(),
            rho_star: RhoStarConfig::default(),
            eval_stride: 100,
            static_benchmark: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRun {
    /// Subgrid data indices (1-based).
    pub indices: Vec<usize>,
    pub series: Vec<RegretSeries>,
    /// Equilibrium fixed points `m*` at the subgrid points.
    pub m_star: Vec<f64>,
    /// Subgrid positions whose equilibrium weights fell below the ESS threshold.
    pub low_ess: Vec<usize>,
    pub rho_star_iterations: Option<usize>,
}

impl RegretRun {
    pub fn get(&self, variant: Variant, benchmark: Benchmark) -> Option<&RegretSeries> {
        self.series.iter().find(|s| s.variant == variant && s.benchmark == benchmark)
    }
}

/// Trains the learner on `trajectory` and scores it on the evaluation subgrid.
///
/// Importance samples are drawn fresh at every subgrid point from the stream
/// `("is-samples", position)` of `seed`; the hindsight measure uses
/// `("rho-star-samples", 0)`.
pub fn regret_run(trajectory: &Trajectory, cfg: &RegretConfig, seed: u64) -> Result<RegretRun> {
    cfg.is.validate()?;
    let indices = subgrid(trajectory.len(), cfg.eval_stride)?;
    let mut ensembles: Vec<ParticleEnsemble> = Vec::with_capacity(indices.len());
    let mut next = 0;
    run_online_with(trajectory, &cfg.onpgd, seed, |k, ens| {
        while next < indices.len() && indices[next] - 1 == k {
            ensembles.push(ens.clone());
            next += 1;
        }
        Ok(())
    })?;

    let tree = SeedTree::new(seed);
    let dim = trajectory.covariate_dim() + 2;
    let beta = cfg.onpgd.beta;
    let lambda = cfg.onpgd.lambda;
    let times: Vec<f64> = indices.iter().map(|k| trajectory.time(k - 1)).collect();
    let mut dyn_reg = Vec::with_capacity(indices.len());
    let mut dyn_unreg = Vec::with_capacity(indices.len());
    let mut m_star = Vec::with_capacity(indices.len());
    let mut low_ess = Vec::new();
    for (l, (&k, ens)) in indices.iter().zip(&ensembles).enumerate() {
        let z = &trajectory.points()[k - 1];
        let at = |e: Error| Error::AtSubgrid { index: l, source: Box::new(e) };
        let samples = SampleSet::draw_prior(dim, cfg.is.prior_var, cfg.is.n_is, &mut tree.stream("is-samples", l as u64))
            .map_err(at)?;
        let mu = solve_mu_star(&samples, z, beta, &cfg.is).map_err(at)?;
        if mu.low_ess() {
            low_ess.push(l);
        }
        dyn_reg.push(instantaneous_regret(ens, &mu.measure, z, lambda, Variant::Regularized).map_err(at)?);
        dyn_unreg.push(instantaneous_regret(ens, &mu.measure, z, lambda, Variant::Unregularized).map_err(at)?);
        m_star.push(mu.m_star);
    }
    let mut series = vec![
        RegretSeries::new(Variant::Regularized, Benchmark::Dynamic, times.clone(), dyn_reg)?,
        RegretSeries::new(Variant::Unregularized, Benchmark::Dynamic, times.clone(), dyn_unreg)?,
    ];
    let mut rho_star_iterations = None;
    if cfg.static_benchmark {
        let samples = SampleSet::draw_prior(dim, cfg.is.prior_var, cfg.is.n_is, &mut tree.stream("rho-star-samples", 0))?;
        let rho = solve_rho_star(trajectory, &samples, beta, &cfg.rho_star)?;
        rho_star_iterations = Some(rho.iterations);
        let mut reg = Vec::with_capacity(indices.len());
        let mut unreg = Vec::with_capacity(indices.len());
        for (&k, ens) in indices.iter().zip(&ensembles) {
            let z = &trajectory.points()[k - 1];
            reg.push(instantaneous_regret(ens, &rho.measure, z, lambda, Variant::Regularized)?);
            unreg.push(instantaneous_regret(ens, &rho.measure, z, lambda, Variant::Unregularized)?);
        }
        series.push(RegretSeries::new(Variant::Regularized, Benchmark::Static, times.clone(), reg)?);
        series.push(RegretSeries::new(Variant::Unregularized, Benchmark::Static, times, unreg)?);
    }
    Ok(RegretRun { indices, series, m_star, low_ess, rho_star_iterations })
}

/// Tags attached to every CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesTags {
    pub trial: usize,
    pub particles: usize,
    pub beta: f64,
    pub lambda: f64,
}

/// Columns `t, instantaneous, cumulative, variant, benchmark, trial, N, beta, lambda`.
pub fn write_series_csv<W: Write>(series: &[RegretSeries], tags: SeriesTags, out: W) -> Result<()> {
    let csv_err = |e: csv::Error| Error::input(format!("csv write failed: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "instantaneous", "cumulative", "variant", "benchmark", "trial", "N", "beta", "lambda"])
        .map_err(csv_err)?;
    for s in series {
        for i in 0..s.times.len() {
            w.write_record([
                s.times[i].to_string(),
                s.instantaneous[i].to_string(),
                s.cumulative[i].to_string(),
                s.variant.to_string(),
                s.benchmark.to_string(),
                tags.trial.to_string(),
                tags.particles.to_string(),
                tags.beta.to_string(),
                tags.lambda.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::input(format!("csv flush failed: {e}")))?;
    Ok(())
}
