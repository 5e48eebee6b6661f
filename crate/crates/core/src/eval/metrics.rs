//! Success rate, completion rate, decision accuracy, reflection accuracy and
//! the error-position histogram, all computed from finished traces.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::suite::{Category, Level, TaskSpec};
use crate::opspace::render_operation;
use crate::trace::{IterationRecord, TaskTrace};
use crate::types::{Operation, PerceptionResult, Verdict};

/// A count over a denominator. `value` is `None` when `total` is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Ratio {
    pub hits: usize,
    pub total: usize,
    pub value: Option<f64>,
}

impl Ratio {
    pub fn new(hits: usize, total: usize) -> Self {
        Ratio {
            hits,
            total,
            value: (total > 0).then(|| hits as f64 / total as f64),
        }
    }

    /// Pools counts.
    pub fn pooled(self, other: Ratio) -> Ratio {
        Ratio::new(self.hits + other.hits, self.total + other.total)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("iterations {iterations:?} have no ground-truth verdict")]
pub struct MissingAnnotations {
    pub iterations: Vec<usize>,
}

/// The verdict that counts for scoring: ground truth when available,
/// otherwise the agent's own.
pub fn judged_verdict(it: &IterationRecord) -> Option<Verdict> {
    it.oracle_verdict.or_else(|| it.verdict())
}

fn same_target(gt: &Operation, op: &Operation, perception: &PerceptionResult) -> bool {
    match (gt, op) {
        (Operation::Tap { x: gx, y: gy }, Operation::Tap { x, y }) => {
            match (perception.element_at(*gx, *gy), perception.element_at(*x, *y)) {
                (Some((a, _)), Some((b, _))) => a == b,
                _ => (gx, gy) == (x, y),
            }
        }
        _ => render_operation(gt) == render_operation(op),
    }
}

/// Fraction of ground-truth steps found, in order, among the trace's
/// Correct operations. Each ground-truth step counts at most once. Taps
/// match when both points fall in the same perceived element.
pub fn compute_cr(trace: &TaskTrace, gt: &[Operation]) -> f64 {
    if gt.is_empty() {
        return 0.0;
    }
    let done: Vec<(&Operation, &PerceptionResult)> = trace
        .iterations
        .iter()
        .filter(|it| it.executed() && judged_verdict(it) == Some(Verdict::Correct))
        .filter_map(|it| it.record.as_ref().map(|r| (&r.operation, &it.perception_before)))
        .collect();
    // Longest common subsequence, one row at a time.
    let mut prev = vec![0usize; done.len() + 1];
    for g in gt {
        let mut row = vec![0usize; done.len() + 1];
        for (j, (op, perc)) in done.iter().enumerate() {
            row[j + 1] = if same_target(g, op, perc) {
                prev[j] + 1
            } else {
                prev[j + 1].max(row[j])
            };
        }
        prev = row;
    }
    prev[done.len()] as f64 / gt.len() as f64
}

/// Correct decisions over all decisions. Stop is not a decision; an
/// iteration whose decision could not be executed is an incorrect one.
pub fn compute_da(trace: &TaskTrace) -> Result<Ratio, MissingAnnotations> {
    let mut missing = Vec::new();
    let mut hits = 0;
    let mut total = 0;
    for it in trace.iterations.iter().filter(|it| !it.is_stop()) {
        total += 1;
        if it.executed() {
            match it.oracle_verdict {
                Some(Verdict::Correct) => hits += 1,
                Some(_) => {}
                None => missing.push(it.index),
            }
        }
    }
    if !missing.is_empty() {
        return Err(MissingAnnotations { iterations: missing });
    }
    Ok(Ratio::new(hits, total))
}

/// Reflections whose verdict agrees with the ground truth.
pub fn compute_ra(trace: &TaskTrace) -> Result<Ratio, MissingAnnotations> {
    let mut missing = Vec::new();
    let mut hits = 0;
    let mut total = 0;
    for it in trace.iterations.iter().filter(|it| it.has_agent_reflection()) {
        total += 1;
        match it.oracle_verdict {
            Some(v) if Some(v) == it.verdict() => hits += 1,
            Some(_) => {}
            None => missing.push(it.index),
        }
    }
    if !missing.is_empty() {
        return Err(MissingAnnotations { iterations: missing });
    }
    Ok(Ratio::new(hits, total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Thirds {
    pub early: usize,
    pub mid: usize,
    pub late: usize,
}

impl Thirds {
    pub fn total(&self) -> usize {
        self.early + self.mid + self.late
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Third {
    Early,
    Mid,
    Late,
}

/// Bucket of iteration `index` (1-based) in a trace of `len` iterations:
/// `[0, 1/3)`, `[1/3, 2/3)`, `[2/3, 1]`.
pub fn position_bucket(index: usize, len: usize) -> Third {
    if 3 * index < len {
        Third::Early
    } else if 3 * index < 2 * len {
        Third::Mid
    } else {
        Third::Late
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("no failed tasks to analyse")]
pub struct NoFailedTasks;

/// Where the non-Correct verdicts of failed tasks fall within their traces.
pub fn error_position_analysis<'a>(
    failed: impl IntoIterator<Item = &'a TaskTrace>,
) -> Result<Thirds, NoFailedTasks> {
    let mut any = false;
    let mut out = Thirds::default();
    for trace in failed {
        any = true;
        let len = trace.iterations.len();
        for it in &trace.iterations {
            match judged_verdict(it) {
                None | Some(Verdict::Correct) => {}
                Some(_) => match position_bucket(it.index, len) {
                    Third::Early => out.early += 1,
                    Third::Mid => out.mid += 1,
                    Third::Late => out.late += 1,
                },
            }
        }
    }
    if any {
        Ok(out)
    } else {
        Err(NoFailedTasks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub id: String,
    pub category: Category,
    pub level: Level,
    pub success: bool,
    pub cr: f64,
    pub da: Ratio,
    pub ra: Ratio,
    pub iterations: usize,
    pub terminal: String,
}

impl TaskRow {
    pub fn new(spec: &TaskSpec, trace: &TaskTrace, success: bool) -> Result<Self, MissingAnnotations> {
        Ok(TaskRow {
            id: spec.id.clone(),
            category: spec.category,
            level: spec.level,
            success,
            cr: compute_cr(trace, &spec.ground_truth),
            da: compute_da(trace)?,
            ra: compute_ra(trace)?,
            iterations: trace.iterations.len(),
            terminal: trace.terminal.as_ref().map_or("unfinished", |t| t.label()).to_string(),
        })
    }
}

/// Metrics over a set of task rows.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub tasks: usize,
    pub sr: Ratio,
    /// Mean of per-task values.
    pub cr: Option<f64>,
    /// Pooled over all decisions.
    pub da: Ratio,
    /// Pooled over all reflections.
    pub ra: Ratio,
}

impl Summary {
    pub fn of<'a>(rows: impl IntoIterator<Item = &'a TaskRow>) -> Self {
        let mut s = Summary::default();
        let mut cr_sum = 0.0;
        let mut successes = 0;
        for r in rows {
            s.tasks += 1;
            successes += usize::from(r.success);
            cr_sum += r.cr;
            s.da = s.da.pooled(r.da);
            s.ra = s.ra.pooled(r.ra);
        }
        s.sr = Ratio::new(successes, s.tasks);
        s.cr = (s.tasks > 0).then(|| cr_sum / s.tasks as f64);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub category: Category,
    pub level: Level,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub suite: String,
    #[serde(flatten)]
    pub overall: Summary,
    /// Present when at least one task failed.
    pub error_position_thirds: Option<Thirds>,
    pub groups: Vec<GroupSummary>,
    pub per_task: Vec<TaskRow>,
}

impl MetricsReport {
    /// `rows` and `traces` are parallel, in suite order.
    pub fn build(suite: &str, rows: Vec<TaskRow>, traces: &[&TaskTrace]) -> Self {
        let failed = rows.iter().zip(traces).filter(|(r, _)| !r.success).map(|(_, t)| *t);
        let thirds = error_position_analysis(failed).ok();
        let mut groups = Vec::new();
        for category in Category::ALL {
            for level in Level::ALL {
                let summary = Summary::of(rows.iter().filter(|r| r.category == category && r.level == level));
                if summary.tasks > 0 {
                    groups.push(GroupSummary {
                        category,
                        level,
                        summary,
                    });
                }
            }
        }
        MetricsReport {
            suite: suite.to_string(),
            overall: Summary::of(&rows),
            error_position_thirds: thirds,
            groups,
            per_task: rows,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The SR/CR/DA/RA table: one row per category, Basic and Advanced
    /// column groups.
    pub fn render_table(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let cell = 28;
        let _ = writeln!(out, "Suite {} ({} tasks)", self.suite, self.overall.tasks);
        let _ = writeln!(out, "{:<14}| {:<cell$}| {:<cell$}", "", "Basic", "Advanced");
        let head = format!("{:<6}{:>7}{:>7}{:>7} ", "SR", "CR", "DA", "RA");
        let _ = writeln!(out, "{:<14}| {head:<cell$}| {head:<cell$}", "Category");
        for category in Category::ALL {
            if !self.groups.iter().any(|g| g.category == category) {
                continue;
            }
            let mut line = format!("{:<14}", category.label());
            for level in Level::ALL {
                let g = self.groups.iter().find(|g| g.category == category && g.level == level);
                let text = g.map_or_else(|| format!("{:<6}{:>7}{:>7}{:>7} ", "-", "-", "-", "-"), |g| summary_cells(&g.summary));
                let _ = write!(line, "| {text:<cell$}");
            }
            let _ = writeln!(out, "{line}");
        }
        let o = &self.overall;
        let _ = writeln!(
            out,
            "Overall: SR {}/{}  CR {}  DA {}  RA {}",
            o.sr.hits,
            o.sr.total,
            pct(o.cr),
            pct(o.da.value),
            pct(o.ra.value)
        );
        if let Some(t) = &self.error_position_thirds {
            let _ = writeln!(out, "Error positions in failed tasks: early {}  mid {}  late {}", t.early, t.mid, t.late);
        }
        out.lines().map(|l| format!("{}\n", l.trim_end())).collect()
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |v| format!("{:.1}", v * 100.0))
}

fn summary_cells(s: &Summary) -> String {
    format!(
        "{:<6}{:>7}{:>7}{:>7} ",
        format!("{}/{}", s.sr.hits, s.sr.total),
        pct(s.cr),
        pct(s.da.value),
        pct(s.ra.value)
    )
}
