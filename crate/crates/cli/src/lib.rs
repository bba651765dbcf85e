//! Command-line workflows around `tpg-core`: dataset generation, training,
//! evaluation, prediction dumps and plots, all driven by one TOML file.

pub mod commands;
pub mod config;
pub mod error;
pub mod lock;
pub mod render;

pub use config::{deterministic_mode, ExperimentConfig, DETERMINISTIC_ENV};
pub use error::{CliError, CliResult};
