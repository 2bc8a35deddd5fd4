//! Experiment driver: config loading, the run commands and plot export.

pub mod commands;
pub mod config;
pub mod plots;

pub use commands::{run, Command, Failure, Outcome};
pub use config::{ConfigError, ExperimentConfig};
