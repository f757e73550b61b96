//! Shared fixtures for the benchmarks.

use mfonline_core::datastream::{gen_nonlinear, NonlinearConfig, Trajectory};

/// Train and test trajectories of the default nonlinear scenario.
pub fn nonlinear_pair(seed: u64) -> (Trajectory, Trajectory) {
    let (train, test, _) = gen_nonlinear(&NonlinearConfig::default(), seed).expect("default config is valid");
    (train, test)
}
