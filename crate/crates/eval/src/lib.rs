//! Scoring link counters and length estimators, and tabulating the results.

pub mod benchmark;
mod error;
pub mod metrics;
pub mod report;

pub use benchmark::{run_benchmark, score_estimator, BenchmarkConfig, BenchmarkEntry, BenchmarkEvent, BenchmarkOutcome, SplitData};
pub use error::{EvalError, Result};
pub use metrics::{accuracy, confusion, length_error, mean_length_error, ConfusionMatrix};
pub use report::{reference_value, BenchmarkReport, Evaluation, ReportRow};
