//! Error statistics, event/non-event breakdowns, the repeated-seed
//! ablation runner and report rendering.

mod experiment;
mod metrics;
mod report;

pub use experiment::{
    run_experiment, score_forecasts, BaselineKind, CellReport, DataSource, ExperimentConfig, ExperimentReport, Group, Method,
    RunFailure, RunResult, SplitSpec, Stat, Summary, TrainingOverrides, DEFAULT_RUNS,
};
pub use metrics::{breakdown, compute_metrics, compute_metrics_without_mape, Breakdown, Metrics, MetricsInput};
pub use report::{cell, render_report, render_report_with, ReportFormat};

use thiserror::Error;

use crate::baselines::BaselineError;
use crate::data::DataError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("metric error: {0}")]
    Metric(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
