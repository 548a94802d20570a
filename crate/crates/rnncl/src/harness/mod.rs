//! Experiment orchestration: configuration parsing, the sequential-task
//! training engine, hyperparameter grids, analysis drivers, and report
//! emission. The continual-learning logic itself lives in the method
//! modules; this layer only wires them to data, models, and files.

pub mod analyze;
pub mod config;
pub mod experiment;
pub mod grid;
pub mod report;

pub use config::{ConfigMap, ExperimentConfig, MethodConfig};
pub use experiment::{
    during_final_metrics, run_experiment, run_experiment_full, RunRecord, RunStatus,
};
