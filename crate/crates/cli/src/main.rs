use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mfonline_cli::config::{ExperimentConfig, Overrides, ScenarioKind, OUT_ENV};
use mfonline_cli::experiments::{cmd_generate, cmd_oos_compare, cmd_regret_sweep, cmd_stats, Outcome};
use mfonline_cli::verify::cmd_verify;

/// Online mean-field learning experiments.
#[derive(Parser)]
#[command(name = "mfonline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output root (default: $MFONLINE_OUT, then ./out).
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    scenario: Option<ScenarioKind>,
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let base = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let o = Overrides {
            scenario: self.scenario,
            seed: self.seed,
            trials: self.trials,
            out: self.out.clone(),
            threads: self.threads,
        };
        Ok(base.apply(&o)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write train/test trajectories for every trial.
    Generate(Common),
    /// Compare online and offline out-of-sample MSE.
    OosCompare(Common),
    /// Regret series over the (N, beta, lambda) sweep grid.
    RegretSweep(Common),
    /// Run the numerical self-checks; exits with status 2 on failure.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Flip the sign of the importance-sampling estimator (negative control).
        #[arg(long)]
        inject_bug: bool,
    },
    /// Summaries and paired tests for two columns of a CSV file.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "mse_online")]
        a: String,
        #[arg(long, default_value = "mse_offline")]
        b: String,
    },
}

fn describe<T>(o: &Outcome<T>, f: impl Fn(&T) -> String) -> String {
    match o {
        Outcome::Ok(v) => f(v),
        Outcome::Unavailable(why) => format!("unavailable ({why})"),
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = c.load()?;
            let r = cmd_generate(&cfg).context("generate failed")?;
            println!("wrote {} trials to {}", r.trials.len(), cfg.out_root().join("generate").display());
        }
        Command::OosCompare(c) => {
            let cfg = c.load()?;
            let r = cmd_oos_compare(&cfg).context("oos-compare failed")?;
            let s = |x: &mfonline_core::stats::StatsSummary| format!("{:.5} [{:.5}, {:.5}]", x.mean, x.ci_lo, x.ci_hi);
            println!("{} ({} trials)", r.scenario, r.trials.len());
            println!("  online  {}", describe(&r.online, s));
            println!("  offline {}", describe(&r.offline, s));
            println!(
                "  paired  {}",
                describe(&r.paired, |p| format!("diff {:.5}, t p {:.3e}, Wilcoxon p {:.3e}", p.mean_diff, p.t_p, p.wilcoxon_p))
            );
        }
        Command::RegretSweep(c) => {
            let cfg = c.load()?;
            let r = cmd_regret_sweep(&cfg).context("regret-sweep failed")?;
            for cell in &r.cells {
                let finals: Vec<String> = cell
                    .series
                    .iter()
                    .map(|s| format!("{}/{} {}", s.variant, s.benchmark, describe(&s.final_cumulative, |x| format!("{:.4}", x.mean))))
                    .collect();
                println!("{}: {} (failures {})", cell.cell, finals.join(", "), cell.failures);
            }
        }
        Command::Verify { common, inject_bug } => {
            let cfg = common.load()?;
            let r = cmd_verify(&cfg, inject_bug).context("verify failed")?;
            for c in &r.checks {
                println!("{} {} measured {:e} tolerance {:e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.measured, c.tolerance);
            }
            if !r.passed {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Stats { input, a, b } => {
            let r = cmd_stats(&input, &a, &b)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
