//! Experiment plumbing: configuration, data ingestion, synthetic
//! scenarios, orchestration and evaluation metrics.

pub mod config;
pub mod data;
pub mod experiment;
pub mod metrics;
pub mod synthetic;

pub use config::{AuditSpec, ExperimentConfig};
pub use data::{
    parse_pois, parse_trajectories, read_log, write_log, LogRecord, ParsedTrajectory,
    TrajectoryFormat,
};
pub use experiment::{run_experiment, ExperimentOutput};
pub use metrics::{knn_eval, knn_table, KnnRow, MetricsReport};
