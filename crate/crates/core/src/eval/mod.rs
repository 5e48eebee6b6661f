//! Task suites, success checks and the SR/CR/DA/RA metrics.

use std::path::PathBuf;

use thiserror::Error;

pub mod annotations;
pub mod metrics;
pub mod runner;
pub mod suite;

pub use annotations::{apply_annotation, score_annotated, Annotations, IterationJudgment, TaskAnnotation};
pub use metrics::{
    compute_cr, compute_da, compute_ra, error_position_analysis, judged_verdict, position_bucket, GroupSummary,
    MetricsReport, MissingAnnotations, NoFailedTasks, Ratio, Summary, TaskRow, Third, Thirds,
};
pub use runner::{
    judge_success, replay_final_state, run_sim_task, run_suite, score_sim_traces, task_instruction, EvalOptions,
    Policy, SuiteRun, TaskRun,
};
pub use suite::{replay_ground_truth, Category, Check, Level, Suite, SuiteDevice, TaskSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("suite schema error: {0}")]
    Schema(String),
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("device spec {path}: {message}")]
    Device { path: PathBuf, message: String },
    #[error("task {id}: {message}")]
    InvalidTask { id: String, message: String },
    #[error("task {0}: no success judgment recorded")]
    MissingJudgment(String),
    #[error("task {id}: iterations {iterations:?} have no ground-truth verdict")]
    MissingAnnotations { id: String, iterations: Vec<usize> },
    #[error("task {id}: trace does not replay: {message}")]
    Replay { id: String, message: String },
    #[error("real-device suites are scored from annotated traces, not run in bulk")]
    RealDevice,
}
