//! Runs simulator suites, one device instance per task, and scores the
//! resulting traces.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use super::metrics::{MetricsReport, TaskRow};
use super::suite::{Suite, SuiteDevice, TaskSpec};
use super::EvalError;
use crate::agents::Agents;
use crate::backends::{ChatBackend, FaultPlan, ModelConfig, OraclePolicy};
use crate::device::Device;
use crate::orchestrator::{inject_knowledge, run_task_with, GroundTruthOracle, Hooks, RunConfig};
use crate::prompting::TemplateSet;
use crate::sim::{DeviceSpec, SimHandle, SimState, Simulator};
use crate::trace::{deserialize_trace, serialize_trace, TaskTrace};
use crate::types::Instruction;

/// Who answers the agent prompts.
#[derive(Clone, Default)]
pub enum Policy {
    /// A scripted oracle built per task from its ground truth.
    #[default]
    Oracle,
    /// A shared backend, e.g. a remote model.
    Backend(Arc<dyn ChatBackend>),
}

#[derive(Clone)]
pub struct EvalOptions {
    /// Base configuration; `knowledge_injection` attaches hints to the tasks
    /// that carry them.
    pub config: RunConfig,
    pub policy: Policy,
    /// Faults planted by the oracle policy in every task.
    pub faults: FaultPlan,
    pub parallel: usize,
    pub models: ModelConfig,
    pub templates: Option<Arc<TemplateSet>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            config: RunConfig::default(),
            policy: Policy::Oracle,
            faults: FaultPlan::none(),
            parallel: 1,
            models: ModelConfig::default(),
            templates: None,
        }
    }
}

/// The instruction a task runs with under `cfg`.
pub fn task_instruction(task: &TaskSpec, cfg: &RunConfig) -> Result<Instruction, EvalError> {
    let ins = Instruction::new(task.instruction.clone()).map_err(|e| EvalError::InvalidTask {
        id: task.id.clone(),
        message: e.to_string(),
    })?;
    Ok(if cfg.knowledge_injection && !task.knowledge.is_empty() {
        inject_knowledge(&ins, &task.knowledge)
    } else {
        ins
    })
}

#[derive(Debug, Clone)]
pub struct TaskRun {
    pub trace: TaskTrace,
    pub final_state: SimState,
}

/// Runs one task on a fresh simulator, judging every step against the
/// ground truth.
pub fn run_sim_task(spec: &Arc<DeviceSpec>, task: &TaskSpec, opts: &EvalOptions) -> Result<TaskRun, EvalError> {
    let world = SimHandle::new(spec.clone());
    let cfg = RunConfig {
        locale: task.locale,
        ..opts.config.clone()
    };
    let ins = task_instruction(task, &cfg)?;
    let backend: Arc<dyn ChatBackend> = match &opts.policy {
        Policy::Oracle => Arc::new(
            OraclePolicy::new(world.clone(), task.ground_truth.clone(), opts.faults.clone(), task.script.clone())
                .backend(),
        ),
        Policy::Backend(b) => b.clone(),
    };
    let templates = opts
        .templates
        .clone()
        .unwrap_or_else(|| TemplateSet::builtin(task.locale));
    let agents = Agents::new(backend, templates).with_models(opts.models.clone());
    let mut oracle = GroundTruthOracle::new(task.ground_truth.clone());
    let mut device = world.clone();
    let span = tracing::info_span!("task", id = %task.id);
    let _guard = span.enter();
    let trace = run_task_with(
        &ins,
        &mut device as &mut dyn Device,
        &world,
        &agents,
        &cfg,
        Hooks {
            sink: None,
            oracle: Some(&mut oracle),
        },
    );
    let final_state = world.lock().state().clone();
    Ok(TaskRun { trace, final_state })
}

/// Rebuilds the final simulator state by replaying a trace's executed
/// operations and rollbacks. Every recorded state id must be reproduced.
pub fn replay_final_state(spec: &Arc<DeviceSpec>, trace: &TaskTrace) -> Result<SimState, String> {
    let mut sim = Simulator::new(spec.clone());
    for it in &trace.iterations {
        if sim.state_id() != it.screen_before {
            return Err(format!(
                "iteration {} starts at {} but the replay is at {}",
                it.index,
                it.screen_before,
                sim.state_id()
            ));
        }
        let (Some(after), Some(record)) = (&it.screen_after, &it.record) else {
            continue;
        };
        sim.execute(&record.operation);
        if sim.state_id() != *after {
            return Err(format!("iteration {} does not reproduce {after}", it.index));
        }
        if let Some(rollback) = &it.rollback {
            let back = sim.revert_one().map_err(|e| e.to_string())?;
            if back != *rollback {
                return Err(format!("iteration {} rollback does not reproduce {rollback}", it.index));
            }
        }
    }
    Ok(sim.state().clone())
}

/// Scores simulator traces. Success comes from replaying each trace, so
/// the result depends only on the traces and the suite.
pub fn score_sim_traces(suite: &Suite, traces: &[TaskTrace]) -> Result<MetricsReport, EvalError> {
    let SuiteDevice::Sim(spec) = &suite.device else {
        return Err(EvalError::RealDevice);
    };
    if traces.len() != suite.tasks.len() {
        return Err(EvalError::Schema(format!(
            "{} traces for {} tasks",
            traces.len(),
            suite.tasks.len()
        )));
    }
    let mut rows = Vec::with_capacity(traces.len());
    for (task, trace) in suite.tasks.iter().zip(traces) {
        let state = replay_final_state(spec, trace).map_err(|message| EvalError::Replay {
            id: task.id.clone(),
            message,
        })?;
        let success = judge_success(task, Some(&state), None)?;
        rows.push(TaskRow::new(task, trace, success).map_err(|e| EvalError::MissingAnnotations {
            id: task.id.clone(),
            iterations: e.iterations,
        })?);
    }
    Ok(MetricsReport::build(&suite.name, rows, &traces.iter().collect::<Vec<_>>()))
}

/// Simulator tasks are judged by their check on the final state; manual
/// tasks need a recorded human judgment.
pub fn judge_success(task: &TaskSpec, final_state: Option<&SimState>, judgment: Option<bool>) -> Result<bool, EvalError> {
    if task.is_manual() {
        return judgment.ok_or_else(|| EvalError::MissingJudgment(task.id.clone()));
    }
    match final_state {
        Some(s) => Ok(task.check(s)),
        None => judgment.ok_or_else(|| EvalError::MissingJudgment(task.id.clone())),
    }
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub traces: Vec<TaskTrace>,
    pub report: MetricsReport,
}

impl SuiteRun {
    /// Writes `traces/<id>.jsonl` and `report.json` under `dir`.
    pub fn write(&self, suite: &Suite, dir: &Path) -> Result<(), EvalError> {
        let io = |path: &Path, e: std::io::Error| EvalError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let traces = dir.join("traces");
        std::fs::create_dir_all(&traces).map_err(|e| io(&traces, e))?;
        for (task, trace) in suite.tasks.iter().zip(&self.traces) {
            let path = traces.join(format!("{}.jsonl", task.id));
            std::fs::write(&path, serialize_trace(trace)).map_err(|e| io(&path, e))?;
        }
        let path = dir.join("report.json");
        std::fs::write(&path, self.report.to_json()).map_err(|e| io(&path, e))
    }
}

/// Runs every task of a simulator suite, `opts.parallel` at a time, then
/// scores the serialized traces.
pub fn run_suite(suite: &Suite, opts: &EvalOptions) -> Result<SuiteRun, EvalError> {
    let SuiteDevice::Sim(spec) = &suite.device else {
        return Err(EvalError::RealDevice);
    };
    let n = suite.tasks.len();
    let slots: Mutex<Vec<Option<Result<TaskRun, EvalError>>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = opts.parallel.clamp(1, n.max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let result = run_sim_task(spec, &suite.tasks[i], opts);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(result);
            });
        }
    });
    let mut traces = Vec::with_capacity(n);
    for (task, slot) in suite.tasks.iter().zip(slots.into_inner().unwrap_or_else(|e| e.into_inner())) {
        let run = slot.expect("every task ran")?;
        // Score what a reader of the trace file would see.
        let trace = deserialize_trace(&serialize_trace(&run.trace)).map_err(|e| EvalError::Replay {
            id: task.id.clone(),
            message: e.to_string(),
        })?;
        traces.push(trace);
    }
    let report = score_sim_traces(suite, &traces)?;
    Ok(SuiteRun { traces, report })
}
