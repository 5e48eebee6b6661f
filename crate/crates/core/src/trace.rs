//! Per-task traces and the operation-history recording rule.
//!
//! A trace file is JSON lines: one header carrying the instruction, the
//! operation history and the terminal state, then one record per iteration.
//! Screenshots are referenced by state id, never inlined.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::RollbackMechanism;
use crate::types::{
    Instruction, MemoryUnit, OperationRecord, PerceptionResult, ReflectionOutcome, StateId,
    TaskProgress, Verdict,
};

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terminal {
    Stopped,
    MaxIterations,
    MaxConsecutiveFailures,
    BackendError { message: String },
    DeviceError { message: String },
    PerceptionError { message: String },
}

impl Terminal {
    pub fn label(&self) -> &'static str {
        match self {
            Terminal::Stopped => "stopped",
            Terminal::MaxIterations => "max_iterations",
            Terminal::MaxConsecutiveFailures => "max_consecutive_failures",
            Terminal::BackendError { .. } => "backend_error",
            Terminal::DeviceError { .. } => "device_error",
            Terminal::PerceptionError { .. } => "perception_error",
        }
    }
}

/// One pass through perceive, decide, execute, reflect.
///
/// The Stop iteration carries a record but no reflection and no
/// `screen_after`. An iteration whose decision could not be turned into a
/// valid operation carries `fault` and an Ineffective reflection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub screen_before: StateId,
    pub perception_before: PerceptionResult,
    pub record: Option<OperationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
    pub reflection: Option<ReflectionOutcome>,
    pub screen_after: Option<StateId>,
    /// State reached after reverting an Erroneous operation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollback: Option<StateId>,
    /// Ground-truth verdict supplied by an oracle or annotation, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_verdict: Option<Verdict>,
    pub progress_snapshot: TaskProgress,
    pub memory_snapshot: MemoryUnit,
}

impl IterationRecord {
    pub fn verdict(&self) -> Option<Verdict> {
        self.reflection.as_ref().map(|r| r.verdict)
    }

    /// An operation was sent to the device in this iteration.
    pub fn executed(&self) -> bool {
        self.screen_after.is_some()
    }

    pub fn is_stop(&self) -> bool {
        self.fault.is_none()
            && self
                .record
                .as_ref()
                .is_some_and(|r| r.operation.is_stop())
    }

    /// The reflection agent produced this verdict (as opposed to a decision fault).
    pub fn has_agent_reflection(&self) -> bool {
        self.reflection.is_some() && self.fault.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTrace {
    pub instruction: Instruction,
    pub iterations: Vec<IterationRecord>,
    pub history: Vec<OperationRecord>,
    pub terminal: Option<Terminal>,
    /// How the device undid erroneous operations during the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollback_mechanism: Option<RollbackMechanism>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("iteration index {got} does not follow {expected}")]
    IndexGap { expected: usize, got: usize },
    #[error("iteration {0} has an executed operation without a reflection")]
    Incomplete(usize),
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("history violates the recording rule: {0}")]
    HistoryMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TaskTrace {
    pub fn new(instruction: Instruction) -> Self {
        TaskTrace {
            instruction,
            iterations: Vec::new(),
            history: Vec::new(),
            terminal: None,
            rollback_mechanism: None,
        }
    }

    /// Appends an iteration; its record joins the history only on a Correct verdict.
    pub fn append(&mut self, iter: IterationRecord) -> Result<(), TraceError> {
        let expected = self.iterations.len() + 1;
        if iter.index != expected {
            return Err(TraceError::IndexGap {
                expected,
                got: iter.index,
            });
        }
        if iter.executed() && iter.reflection.is_none() {
            return Err(TraceError::Incomplete(iter.index));
        }
        if iter.verdict() == Some(Verdict::Correct) && iter.fault.is_none() {
            if let Some(record) = &iter.record {
                self.history.push(record.clone());
            }
        }
        self.iterations.push(iter);
        Ok(())
    }

    pub fn correct_count(&self) -> usize {
        self.iterations
            .iter()
            .filter(|i| i.fault.is_none() && i.verdict() == Some(Verdict::Correct))
            .count()
    }

    /// Re-checks the history rule and index density.
    pub fn verify(&self) -> Result<(), TraceError> {
        for (pos, iter) in self.iterations.iter().enumerate() {
            if iter.index != pos + 1 {
                return Err(TraceError::IndexGap {
                    expected: pos + 1,
                    got: iter.index,
                });
            }
            if iter.executed() && iter.reflection.is_none() {
                return Err(TraceError::Incomplete(iter.index));
            }
        }
        let expected: Vec<&OperationRecord> = self
            .iterations
            .iter()
            .filter(|i| i.fault.is_none() && i.verdict() == Some(Verdict::Correct))
            .filter_map(|i| i.record.as_ref())
            .collect();
        if expected.len() != self.history.len() {
            return Err(TraceError::HistoryMismatch(format!(
                "{} Correct iterations but {} history entries",
                expected.len(),
                self.history.len()
            )));
        }
        if let Some(pos) = expected
            .iter()
            .zip(&self.history)
            .position(|(a, b)| *a != b)
        {
            return Err(TraceError::HistoryMismatch(format!(
                "history entry {} is not the record of the matching Correct iteration",
                pos + 1
            )));
        }
        let mut last = 0;
        for iter in &self.iterations {
            for entry in iter.memory_snapshot.entries() {
                if entry.iteration > iter.index {
                    return Err(TraceError::HistoryMismatch(format!(
                        "memory entry from iteration {} appears at iteration {}",
                        entry.iteration, iter.index
                    )));
                }
            }
            if let Some(e) = iter.memory_snapshot.entries().last() {
                if e.iteration < last {
                    return Err(TraceError::HistoryMismatch("memory unit shrank".into()));
                }
                last = e.iteration;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    version: u32,
    instruction: Instruction,
    iterations: usize,
    history: Vec<OperationRecord>,
    terminal: Option<Terminal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rollback_mechanism: Option<RollbackMechanism>,
}

#[derive(Serialize, Deserialize)]
struct Line {
    kind: String,
    #[serde(flatten)]
    iteration: IterationRecord,
}

pub fn write_trace<W: Write>(trace: &TaskTrace, mut out: W) -> Result<(), TraceError> {
    let header = Header {
        kind: "header".into(),
        version: TRACE_FORMAT_VERSION,
        instruction: trace.instruction.clone(),
        iterations: trace.iterations.len(),
        history: trace.history.clone(),
        terminal: trace.terminal.clone(),
        rollback_mechanism: trace.rollback_mechanism,
    };
    serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for iter in &trace.iterations {
        let line = Line {
            kind: "iteration".into(),
            iteration: iter.clone(),
        };
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn serialize_trace(trace: &TaskTrace) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

/// Streams a trace back in; records are read one line at a time.
pub fn read_trace<R: BufRead>(input: R) -> Result<TaskTrace, TraceError> {
    let mut lines = input.lines().enumerate();
    let corrupt = |line: usize, message: String| TraceError::Corrupt {
        line: line + 1,
        message,
    };
    let (n, first) = lines
        .next()
        .ok_or_else(|| corrupt(0, "empty trace file".into()))?;
    let header: Header =
        serde_json::from_str(&first?).map_err(|e| corrupt(n, e.to_string()))?;
    if header.kind != "header" {
        return Err(corrupt(n, format!("expected header, found {:?}", header.kind)));
    }
    if header.version != TRACE_FORMAT_VERSION {
        return Err(corrupt(n, format!("unsupported version {}", header.version)));
    }
    let mut iterations = Vec::with_capacity(header.iterations);
    for (n, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Line = serde_json::from_str(&line).map_err(|e| corrupt(n, e.to_string()))?;
        if rec.kind != "iteration" {
            return Err(corrupt(n, format!("expected iteration, found {:?}", rec.kind)));
        }
        iterations.push(rec.iteration);
    }
    if iterations.len() != header.iterations {
        return Err(corrupt(
            0,
            format!(
                "header announces {} iterations, found {}",
                header.iterations,
                iterations.len()
            ),
        ));
    }
    Ok(TaskTrace {
        instruction: header.instruction,
        iterations,
        history: header.history,
        terminal: header.terminal,
        rollback_mechanism: header.rollback_mechanism,
    })
}

pub fn deserialize_trace(bytes: &[u8]) -> Result<TaskTrace, TraceError> {
    read_trace(bytes)
}
