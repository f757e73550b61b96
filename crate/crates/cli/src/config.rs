//! Experiment configuration, read from TOML.
//!
//! Every key is optional; missing keys take the library defaults. Command-line
//! flags are applied on top with [`Overrides`].

use std::path::{Path, PathBuf};

use mfonline_core::datastream::{NonlinearConfig, PeriodicConfig, Scenario};
use mfonline_core::equilibrium::{IsSolverConfig, RhoStarConfig};
use mfonline_core::offline::OfflineFitConfig;
use mfonline_core::onpgd::OnpgdConfig;
use mfonline_core::regret::RegretConfig;
use mfonline_core::rng::SeedTree;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "MFONLINE_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Periodic,
    #[default]
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsSettings {
    pub n_is: usize,
    /// Proposal variance; `beta / lambda` of the cell when absent.
    pub prior_var: Option<f64>,
    pub root_tol: f64,
    pub max_bracket_expansions: usize,
}

impl Default for IsSettings {
    fn default() -> Self {
        let d = IsSolverConfig::default();
        IsSettings { n_is: d.n_is, prior_var: None, root_tol: d.root_tol, max_bracket_expansions: d.max_bracket_expansions }
    }
}

impl IsSettings {
    pub fn solver(&self, beta: f64, lambda: f64) -> IsSolverConfig {
        IsSolverConfig {
            n_is: self.n_is,
            prior_var: self.prior_var.unwrap_or(beta / lambda),
            root_tol: self.root_tol,
            max_bracket_expansions: self.max_bracket_expansions,
        }
    }
}

/// Offline fit settings. Lambda is shared with the online learner and the
/// initialization seed is the trial seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineSettings {
    pub iters: usize,
    pub learning_rate: f64,
    pub particles: usize,
    pub init_sd: f64,
}

impl Default for OfflineSettings {
    fn default() -> Self {
        let d = OfflineFitConfig::default();
        OfflineSettings { iters: d.iters, learning_rate: d.learning_rate, particles: d.particles, init_sd: d.init_sd }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegretSettings {
    pub eval_stride: usize,
    pub static_benchmark: bool,
}

impl Default for RegretSettings {
    fn default() -> Self {
        let d = RegretConfig::default();
        RegretSettings { eval_stride: d.eval_stride, static_benchmark: d.static_benchmark }
    }
}

/// Sweep axes; cells are the Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub particles: Vec<usize>,
    pub betas: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl Default for SweepAxes {
    fn default() -> Self {
        let d = OnpgdConfig::default();
        SweepAxes { particles: vec![d.particles], betas: vec![d.beta], lambdas: vec![d.lambda] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    pub beta: f64,
    pub lambda: f64,
    pub instances: usize,
    pub quad_points: usize,
    pub n_is: usize,
    pub fd_step: f64,
    pub gap_tol: f64,
    pub dym_tol: f64,
    pub is_tol: f64,
    pub constants_tol: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            beta: 0.02,
            lambda: 0.1,
            instances: 20,
            quad_points: 4001,
            n_is: 200_000,
            fd_step: 1e-4,
            gap_tol: 1e-6,
            dym_tol: 1e-4,
            is_tol: 3e-3,
            constants_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    pub trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Worker threads; all available cores when absent.
    pub threads: Option<usize>,
    pub periodic: PeriodicConfig,
    pub nonlinear: NonlinearConfig,
    pub onpgd: OnpgdConfig,
    pub is: IsSettings,
    pub rho_star: RhoStarConfig,
    pub offline: OfflineSettings,
    pub regret: RegretSettings,
    pub sweep: SweepAxes,
    pub verify: VerifySettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: ScenarioKind::default(),
            trials: 30,
            seed: 2024,
            out: None,
            threads: None,
            periodic: PeriodicConfig::default(),
            nonlinear: NonlinearConfig::default(),
            onpgd: OnpgdConfig::default(),
            is: IsSettings::default(),
            rho_star: RhoStarConfig::default(),
            offline: OfflineSettings::default(),
            regret: RegretSettings::default(),
            sweep: SweepAxes::default(),
            verify: VerifySettings::default(),
        }
    }
}

/// Command-line values that replace config keys when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<ScenarioKind>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn apply(mut self, o: &Overrides) -> CliResult<Self> {
        if let Some(s) = o.scenario {
            self.scenario = s;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.trials {
            self.trials = t;
        }
        if let Some(p) = &o.out {
            self.out = Some(p.clone());
        }
        if let Some(t) = o.threads {
            self.threads = Some(t);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        self.onpgd.validate()?;
        Ok(())
    }

    pub fn validate_sweep(&self) -> CliResult<()> {
        let s = &self.sweep;
        if s.particles.is_empty() || s.betas.is_empty() || s.lambdas.is_empty() {
            return Err(CliError::Config("sweep axes must be nonempty".into()));
        }
        Ok(())
    }

    /// Output root: config or flag, then the environment, then `out`.
    pub fn out_root(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn scenario(&self) -> Scenario {
        match self.scenario {
            ScenarioKind::Periodic => Scenario::Periodic(self.periodic.clone()),
            ScenarioKind::Nonlinear => Scenario::Nonlinear(self.nonlinear.clone()),
        }
    }

    /// Learner settings with the time step taken from the scenario.
    pub fn onpgd_for(&self, particles: usize, beta: f64, lambda: f64) -> OnpgdConfig {
        OnpgdConfig { particles, beta, lambda, dt: self.scenario().dt(), ..self.onpgd }
    }

    pub fn offline_fit(&self, trial_seed: u64) -> OfflineFitConfig {
        let o = &self.offline;
        OfflineFitConfig {
            iters: o.iters,
            learning_rate: o.learning_rate,
            lambda: self.onpgd.lambda,
            particles: o.particles,
            init_sd: o.init_sd,
            init_seed: trial_seed,
        }
    }

    pub fn regret_for(&self, particles: usize, beta: f64, lambda: f64) -> RegretConfig {
        RegretConfig {
            onpgd: self.onpgd_for(particles, beta, lambda),
            is: self.is.solver(beta, lambda),
            rho_star: self.rho_star,
            eval_stride: self.regret.eval_stride,
            static_benchmark: self.regret.static_benchmark,
        }
    }
}

/// Seed of trial `t`. Shared by every sweep cell, so cells see the same data.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    SeedTree::new(master).child("trial", trial as u64).seed()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn partial_sections_and_overrides() {
        let cfg = ExperimentConfig::from_toml(
            "scenario = \"periodic\"\ntrials = 4\n[onpgd]\nbeta = 0.05\n[sweep]\nparticles = [20, 200]\n",
        )
        .unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::Periodic);
        assert_eq!(cfg.onpgd.beta, 0.05);
        assert_eq!(cfg.onpgd.particles, 80);
        assert_eq!(cfg.sweep.particles, vec![20, 200]);
        let cfg = cfg.apply(&Overrides { trials: Some(9), seed: Some(1), ..Default::default() }).unwrap();
        assert_eq!((cfg.trials, cfg.seed), (9, 1));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml("trials = 0").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        let cfg = ExperimentConfig { sweep: SweepAxes { betas: vec![], ..Default::default() }, ..Default::default() };
        assert!(cfg.validate_sweep().is_err());
    }

    #[test]
    fn derived_solver_settings() {
        let cfg = ExperimentConfig::default();
        assert!((cfg.is.solver(0.02, 0.4).prior_var - 0.05).abs() < 1e-15);
        let r = cfg.regret_for(20, 0.05, 0.1);
        assert_eq!((r.onpgd.particles, r.onpgd.beta, r.onpgd.dt), (20, 0.05, 0.02));
        assert_eq!(cfg.offline_fit(77).init_seed, 77);
    }
}
