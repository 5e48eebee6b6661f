//! Human judgments for real-device runs.
//!
//! ```toml
//! [[task]]
//! id = "open-settings"
//! success = true
//!
//! [[task.iteration]]
//! index = 1
//! verdict = "Correct"
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{MetricsReport, TaskRow};
use super::runner::judge_success;
use super::suite::Suite;
use super::EvalError;
use crate::trace::TaskTrace;
use crate::types::Verdict;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationJudgment {
    pub index: usize,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskAnnotation {
    pub id: String,
    pub success: Option<bool>,
    #[serde(default, rename = "iteration")]
    pub iterations: Vec<IterationJudgment>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotations {
    #[serde(default, rename = "task")]
    pub tasks: Vec<TaskAnnotation>,
}

impl Annotations {
    pub fn from_toml_str(text: &str) -> Result<Self, EvalError> {
        toml::from_str(text).map_err(|e| EvalError::Schema(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn task(&self, id: &str) -> Option<&TaskAnnotation> {
        self.tasks.iter().find(|t| t.id == id)
    }
}

/// Copies the annotated verdicts into the trace's iterations.
pub fn apply_annotation(trace: &mut TaskTrace, ann: &TaskAnnotation) -> Result<(), EvalError> {
    let mut seen = BTreeSet::new();
    for j in &ann.iterations {
        if !seen.insert(j.index) {
            return Err(EvalError::Schema(format!("task {}: iteration {} annotated twice", ann.id, j.index)));
        }
        let it = trace
            .iterations
            .iter_mut()
            .find(|it| it.index == j.index)
            .ok_or_else(|| EvalError::Schema(format!("task {}: trace has no iteration {}", ann.id, j.index)))?;
        it.oracle_verdict = Some(j.verdict);
    }
    Ok(())
}

/// Scores real-device traces (suite order) with human annotations. Every
/// executed iteration needs a verdict and every task a success judgment.
pub fn score_annotated(suite: &Suite, traces: &[TaskTrace], ann: &Annotations) -> Result<MetricsReport, EvalError> {
    if traces.len() != suite.tasks.len() {
        return Err(EvalError::Schema(format!(
            "{} traces for {} tasks",
            traces.len(),
            suite.tasks.len()
        )));
    }
    let mut annotated = Vec::with_capacity(traces.len());
    let mut rows = Vec::with_capacity(traces.len());
    for (task, trace) in suite.tasks.iter().zip(traces) {
        let mut trace = trace.clone();
        let entry = ann.task(&task.id);
        if let Some(entry) = entry {
            apply_annotation(&mut trace, entry)?;
        }
        let success = judge_success(task, None, entry.and_then(|e| e.success))?;
        rows.push(TaskRow::new(task, &trace, success).map_err(|e| EvalError::MissingAnnotations {
            id: task.id.clone(),
            iterations: e.iterations,
        })?);
        annotated.push(trace);
    }
    Ok(MetricsReport::build(&suite.name, rows, &annotated.iter().collect::<Vec<_>>()))
}
