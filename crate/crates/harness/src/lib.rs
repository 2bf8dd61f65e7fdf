//! Experiment harness: configuration, training pipelines, evaluation and
//! artifact output for the `srlab` command-line tool.

pub mod commands;
pub mod config;
pub mod oracle;
pub mod report;

pub use commands::Ctx;
pub use config::ExperimentConfig;
pub use report::{normalize_return, NormalizationSpec, RunReport};
