//! Experiment runner for adaptive multilevel Monte Carlo: configuration,
//! problem construction and CSV output behind the `amlmc` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

pub use error::{CliError, CliResult};
