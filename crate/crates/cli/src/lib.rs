//! Experiment driver: reads a JSON config, runs one scenario and writes CSV
//! results into an output directory.

pub mod config;
pub mod error;
pub mod scenarios;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use scenarios::{run, RunOptions};
