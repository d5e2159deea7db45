//! Forecasting tasks, the live-update protocol, metrics and reports.

mod live;
pub mod metrics;
mod report;
mod tasks;

use thiserror::Error;

pub use live::{live_update_run, live_update_run_with_epochs, run_bench, BenchConfig, BenchOutcome};
pub use report::{
    aggregate_report, hub_heatmap, mean_std, recurrence_csv, write_report_files, Aggregate, EvalReport,
    HubHeatmap, RunRecord, StepRecord, REPORT_SCHEMA_VERSION,
};
pub use tasks::{
    centrality_targets, evaluable_genes, expression_targets, graph_digest, sample_negatives, FeatureScaler,
    Task,
};

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("need at least {needed} snapshots, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },
    #[error("no negative pairs available: active genes are fully connected")]
    NoNegativesAvailable,
    #[error("labels need at least one positive and one negative")]
    DegenerateLabels,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("empty prediction series")]
    EmptySeries,
    #[error("config hash {found} differs from {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("invalid bench configuration: {0}")]
    InvalidConfig(String),
    #[error("report schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
