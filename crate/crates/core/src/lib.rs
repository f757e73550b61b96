//! Mean-field online learning of a two-layer tanh network from a data stream.

pub mod datastream;
pub mod equilibrium;
pub mod error;
pub mod measures;
pub mod model;
pub mod offline;
pub mod onpgd;
pub mod regret;
pub mod rng;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use model::{DataPoint, FeatureMap, Measure, Theta};
