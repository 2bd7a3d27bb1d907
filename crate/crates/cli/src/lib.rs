//! Experiment driver: configuration, dataset plumbing and one function per
//! subcommand of the `pcsc` binary.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
