//! Experiment harness around `guard-core`: configuration, data loading,
//! synthetic graphs and the evaluation pipelines behind the `guard` CLI.

pub mod config;
pub mod data;
pub mod error;
pub mod pipeline;
pub mod synth;

pub use config::{DatasetSpec, DefenseKind, ExperimentConfig, ModelChoice};
pub use error::{HarnessError, HarnessResult};
