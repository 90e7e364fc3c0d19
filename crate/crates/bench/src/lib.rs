//! Experiment harness for distributional Shapley values: dataset generation
//! and ingestion, per-point valuation, the point-addition experiment, the
//! timing benchmark, and table output.

pub mod commands;
pub mod config;
pub mod datasets;
pub mod error;
pub mod output;
pub mod point_addition;
pub mod time_bench;
pub mod valuation;

pub use config::{ExperimentConfig, Format, Method, Task};
pub use datasets::Dataset;
pub use error::{BenchError, Result};
