//! Command-line driver: configuration, orchestration and result files.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, Cli};
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
