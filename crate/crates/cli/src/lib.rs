//! Experiment orchestration for the `mfonline` command-line tool.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod verify;

pub use config::{ExperimentConfig, Overrides, ScenarioKind};
pub use error::{CliError, CliResult};
