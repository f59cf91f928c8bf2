//! Experiment configs and pipelines driven by the `llpr` binary.

pub mod config;
pub mod output;
pub mod recipes;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind};
pub use output::Outputs;
