//! Experiment harness: configuration, synthetic benchmark, strategy runner
//! and report writers behind the `adecot` binary.

pub mod config;
pub mod error;
pub mod generator;
pub mod output;
pub mod runner;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
