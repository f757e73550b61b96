//! Multi-trial experiment drivers: data generation, out-of-sample comparison,
//! regret sweeps and stand-alone statistics.

use std::io::Write;
use std::path::{Path, PathBuf};

use mfonline_core::datastream::Trajectory;
use mfonline_core::measures::oos_mse_from_predictions;
use mfonline_core::offline::{compare_oos, online_test_predictions, write_loss_csv};
use mfonline_core::regret::{regret_run, write_series_csv, Benchmark, RegretRun, SeriesTags, Variant};
use mfonline_core::stats::{paired_tests, summarize, PairedTestResult, StatsSummary};
use serde::{Deserialize, Serialize};

use crate::config::{trial_seed, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::output::{run_indexed, trial_dir, write_json, write_with};

/// A statistic, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome<T> {
    Ok(T),
    Unavailable(String),
}

impl<T> Outcome<T> {
    pub fn from_result<E: std::fmt::Display>(r: Result<T, E>) -> Self {
        match r {
            Ok(v) => Outcome::Ok(v),
            Err(e) => Outcome::Unavailable(e.to_string()),
        }
    }

    pub fn ok(&self) -> Option<&T> {
        match self {
            Outcome::Ok(v) => Some(v),
            Outcome::Unavailable(_) => None,
        }
    }
}

fn write_trajectory(path: &Path, t: &Trajectory) -> CliResult<()> {
    write_with(path, |w| Ok(t.write_csv(w)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTrial {
    pub trial: usize,
    pub seed: u64,
    pub train_mean_square_response: f64,
    pub test_mean_square_response: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateReport {
    pub scenario: String,
    pub trials: Vec<GeneratedTrial>,
    pub mean_square_response: Outcome<StatsSummary>,
}

/// Writes `train.csv` and `test.csv` for every trial.
pub fn cmd_generate(cfg: &ExperimentConfig) -> CliResult<GenerateReport> {
    let root = cfg.out_root();
    let scenario = cfg.scenario();
    let results = run_indexed(cfg.threads, cfg.trials, |t| -> CliResult<GeneratedTrial> {
        let seed = trial_seed(cfg.seed, t);
        let (train, test) = scenario.generate(seed)?;
        let dir = trial_dir(&root, "generate", scenario.name(), t);
        write_trajectory(&dir.join("train.csv"), &train)?;
        write_trajectory(&dir.join("test.csv"), &test)?;
        Ok(GeneratedTrial {
            trial: t,
            seed,
            train_mean_square_response: train.mean_square_response(),
            test_mean_square_response: test.mean_square_response(),
        })
    })?;
    let trials = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    let ms: Vec<f64> = trials.iter().map(|t| t.train_mean_square_response).collect();
    let report = GenerateReport {
        scenario: scenario.name().into(),
        mean_square_response: Outcome::from_result(summarize(&ms)),
        trials,
    };
    write_json(&root.join("generate").join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosTrial {
    pub trial: usize,
    pub seed: u64,
    pub mse_online: f64,
    pub mse_offline: f64,
    pub offline_final_loss: f64,
    pub mean_square_response: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosReport {
    pub scenario: String,
    pub trials: Vec<OosTrial>,
    pub online: Outcome<StatsSummary>,
    pub offline: Outcome<StatsSummary>,
    pub mean_square_response: Outcome<StatsSummary>,
    /// Online minus offline.
    pub paired: Outcome<PairedTestResult>,
}

/// Online versus offline out-of-sample MSE, one paired observation per trial.
/// No files are written.
pub fn run_oos_trials(cfg: &ExperimentConfig) -> CliResult<OosReport> {
    run_oos_inner(cfg, None)
}

/// Like [`run_oos_trials`], writing per-trial offline loss traces, a
/// `trials.csv` table and `report.json` under `<out>/oos-compare`.
pub fn cmd_oos_compare(cfg: &ExperimentConfig) -> CliResult<OosReport> {
    let root = cfg.out_root();
    let report = run_oos_inner(cfg, Some(&root))?;
    let base = root.join("oos-compare");
    write_with(&base.join("trials.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["trial", "seed", "mse_online", "mse_offline", "offline_final_loss", "mean_square_response"])?;
        for t in &report.trials {
            csv.write_record([
                t.trial.to_string(),
                t.seed.to_string(),
                t.mse_online.to_string(),
                t.mse_offline.to_string(),
                t.offline_final_loss.to_string(),
                t.mean_square_response.to_string(),
            ])?;
        }
        csv.flush().map_err(|e| CliError::io(&base, e))
    })?;
    write_json(&base.join("report.json"), &report)?;
    Ok(report)
}

fn run_oos_inner(cfg: &ExperimentConfig, root: Option<&Path>) -> CliResult<OosReport> {
    let scenario = cfg.scenario();
    let onpgd = cfg.onpgd_for(cfg.onpgd.particles, cfg.onpgd.beta, cfg.onpgd.lambda);
    let results = run_indexed(cfg.threads, cfg.trials, |t| -> CliResult<OosTrial> {
        let seed = trial_seed(cfg.seed, t);
        let (train, test) = scenario.generate(seed)?;
        let rec = compare_oos(&train, &test, &onpgd, &cfg.offline_fit(seed), seed)?;
        if let Some(root) = root {
            let dir = trial_dir(root, "oos-compare", scenario.name(), t);
            write_with(&dir.join("offline_loss.csv"), |w| Ok(write_loss_csv(&rec.offline_loss_trace, w)?))?;
        }
        Ok(OosTrial {
            trial: t,
            seed,
            mse_online: rec.mse_online,
            mse_offline: rec.mse_offline,
            offline_final_loss: *rec.offline_loss_trace.last().expect("trace has iters + 1 entries"),
            mean_square_response: test.mean_square_response(),
        })
    })?;
    let trials = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    let online: Vec<f64> = trials.iter().map(|t| t.mse_online).collect();
    let offline: Vec<f64> = trials.iter().map(|t| t.mse_offline).collect();
    let ms: Vec<f64> = trials.iter().map(|t| t.mean_square_response).collect();
    Ok(OosReport {
        scenario: scenario.name().into(),
        online: Outcome::from_result(summarize(&online)),
        offline: Outcome::from_result(summarize(&offline)),
        mean_square_response: Outcome::from_result(summarize(&ms)),
        paired: Outcome::from_result(paired_tests(&online, &offline)),
        trials,
    })
}

/// One point of a sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub particles: usize,
    pub beta: f64,
    pub lambda: f64,
}

impl Cell {
    pub fn name(&self) -> String {
        format!("N{}_beta{}_lambda{}", self.particles, self.beta, self.lambda)
    }
}

pub fn sweep_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let s = &cfg.sweep;
    let mut cells = Vec::new();
    for &particles in &s.particles {
        for &beta in &s.betas {
            for &lambda in &s.lambdas {
                cells.push(Cell { particles, beta, lambda });
            }
        }
    }
    cells
}

/// Regret run plus the learner's out-of-sample MSE on the test stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTrial {
    pub trial: usize,
    pub seed: u64,
    pub run: RegretRun,
    pub oos_mse: f64,
}

fn cell_trial(cfg: &ExperimentConfig, cell: Cell, trial: usize) -> CliResult<CellTrial> {
    let seed = trial_seed(cfg.seed, trial);
    let (train, test) = cfg.scenario().generate(seed)?;
    let rcfg = cfg.regret_for(cell.particles, cell.beta, cell.lambda);
    let run = regret_run(&train, &rcfg, seed)?;
    let preds = online_test_predictions(&train, &test, &rcfg.onpgd, seed)?;
    let oos_mse = oos_mse_from_predictions(&preds, &test)?;
    Ok(CellTrial { trial, seed, run, oos_mse })
}

/// All trials of one cell, in trial order. Failed trials keep their error.
pub fn run_cell(cfg: &ExperimentConfig, cell: Cell) -> CliResult<Vec<CliResult<CellTrial>>> {
    run_indexed(cfg.threads, cfg.trials, |t| cell_trial(cfg, cell, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub variant: Variant,
    pub benchmark: Benchmark,
    pub final_cumulative: Outcome<StatsSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub error: Option<String>,
    pub low_ess_points: usize,
    pub rho_star_iterations: Option<usize>,
    pub oos_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: String,
    pub particles: usize,
    pub beta: f64,
    pub lambda: f64,
    pub failures: usize,
    pub trials: Vec<TrialRecord>,
    pub series: Vec<SeriesSummary>,
    pub oos_mse: Outcome<StatsSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub scenario: String,
    pub cells: Vec<CellReport>,
}

const SERIES_KINDS: [(Variant, Benchmark); 4] = [
    (Variant::Regularized, Benchmark::Dynamic),
    (Variant::Unregularized, Benchmark::Dynamic),
    (Variant::Regularized, Benchmark::Static),
    (Variant::Unregularized, Benchmark::Static),
];

/// Summarizes one cell's trials without touching the file system.
pub fn cell_report(cell: Cell, trials: &[CliResult<CellTrial>], seeds: &[u64]) -> CellReport {
    let mut records = Vec::with_capacity(trials.len());
    for (t, r) in trials.iter().enumerate() {
        records.push(match r {
            Ok(ct) => TrialRecord {
                trial: t,
                seed: ct.seed,
                error: None,
                low_ess_points: ct.run.low_ess.len(),
                rho_star_iterations: ct.run.rho_star_iterations,
                oos_mse: Some(ct.oos_mse),
            },
            Err(e) => TrialRecord {
                trial: t,
                seed: seeds[t],
                error: Some(e.to_string()),
                low_ess_points: 0,
                rho_star_iterations: None,
                oos_mse: None,
            },
        });
    }
    let ok: Vec<&CellTrial> = trials.iter().filter_map(|r| r.as_ref().ok()).collect();
    let series = SERIES_KINDS
        .iter()
        .filter_map(|&(variant, benchmark)| {
            let finals: Vec<f64> =
                ok.iter().filter_map(|ct| ct.run.get(variant, benchmark)).map(|s| s.final_cumulative()).collect();
            (!finals.is_empty())
                .then(|| SeriesSummary { variant, benchmark, final_cumulative: Outcome::from_result(summarize(&finals)) })
        })
        .collect();
    let oos: Vec<f64> = ok.iter().map(|ct| ct.oos_mse).collect();
    CellReport {
        cell: cell.name(),
        particles: cell.particles,
        beta: cell.beta,
        lambda: cell.lambda,
        failures: trials.len() - ok.len(),
        trials: records,
        series,
        oos_mse: Outcome::from_result(summarize(&oos)),
    }
}

/// Runs every (cell, trial) pair. Each trial directory receives `regret.csv`
/// or, if the trial failed, `error.txt`; other cells are unaffected.
pub fn cmd_regret_sweep(cfg: &ExperimentConfig) -> CliResult<SweepReport> {
    cfg.validate_sweep()?;
    let root = cfg.out_root();
    let cells = sweep_cells(cfg);
    let n = cells.len() * cfg.trials;
    let results = run_indexed(cfg.threads, n, |i| {
        let (cell, trial) = (cells[i / cfg.trials], i % cfg.trials);
        let out = cell_trial(cfg, cell, trial);
        let dir = trial_dir(&root, "regret-sweep", &cell.name(), trial);
        let written = match &out {
            Ok(ct) => {
                let tags = SeriesTags { trial, particles: cell.particles, beta: cell.beta, lambda: cell.lambda };
                write_with(&dir.join("regret.csv"), |w| Ok(write_series_csv(&ct.run.series, tags, w)?))
            }
            Err(e) => write_with(&dir.join("error.txt"), |w| writeln!(w, "{e}").map_err(|io| CliError::io(&dir, io))),
        };
        written.map(|_| out)
    })?;
    let results = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    let seeds: Vec<u64> = (0..cfg.trials).map(|t| trial_seed(cfg.seed, t)).collect();
    let reports: Vec<CellReport> = cells
        .iter()
        .zip(results.chunks(cfg.trials))
        .map(|(cell, trials)| cell_report(*cell, trials, &seeds))
        .collect();
    let base = root.join("regret-sweep");
    write_with(&base.join("summary.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["cell", "N", "beta", "lambda", "variant", "benchmark", "n", "mean", "sd", "ci_lo", "ci_hi"])?;
        for c in &reports {
            for s in &c.series {
                if let Some(sum) = s.final_cumulative.ok() {
                    csv.write_record([
                        c.cell.clone(),
                        c.particles.to_string(),
                        c.beta.to_string(),
                        c.lambda.to_string(),
                        s.variant.to_string(),
                        s.benchmark.to_string(),
                        sum.n.to_string(),
                        sum.mean.to_string(),
                        sum.sd.to_string(),
                        sum.ci_lo.to_string(),
                        sum.ci_hi.to_string(),
                    ])?;
                }
            }
        }
        csv.flush().map_err(|e| CliError::io(&base, e))
    })?;
    let report = SweepReport { scenario: cfg.scenario().name().into(), cells: reports };
    write_json(&base.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub input: PathBuf,
    pub column_a: String,
    pub column_b: String,
    pub a: Outcome<StatsSummary>,
    pub b: Outcome<StatsSummary>,
    /// `a - b`.
    pub paired: Outcome<PairedTestResult>,
}

fn read_column_pair(path: &Path, a: &str, b: &str) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let index = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("{}: no column named {name:?}", path.display())))
    };
    let (ia, ib) = (index(a)?, index(b)?);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("{} row {}: {e}", path.display(), row + 1)))
        };
        xs.push(parse(ia)?);
        ys.push(parse(ib)?);
    }
    Ok((xs, ys))
}

/// Summaries and paired tests for two columns of a CSV file.
pub fn cmd_stats(input: &Path, column_a: &str, column_b: &str) -> CliResult<StatsReport> {
    let (a, b) = read_column_pair(input, column_a, column_b)?;
    Ok(StatsReport {
        input: input.to_path_buf(),
        column_a: column_a.into(),
        column_b: column_b.into(),
        a: Outcome::from_result(summarize(&a)),
        b: Outcome::from_result(summarize(&b)),
        paired: Outcome::from_result(paired_tests(&a, &b)),
    })
}
