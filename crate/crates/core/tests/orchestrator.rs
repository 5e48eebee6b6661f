//! Control-loop scenarios with scripted backends and simulated devices.

use std::sync::{Arc, Mutex};

use mobile_operator::agents::Agents;
use mobile_operator::backends::{ScriptedBackend, ScriptedRule};
use mobile_operator::device::{Device, DeviceError, ExecutionReport, RollbackMechanism};
use mobile_operator::eval::{run_sim_task, EvalOptions, Suite, SuiteDevice};
use mobile_operator::orchestrator::{run_task, run_task_with, Event, Hooks, RunConfig};
use mobile_operator::perception::{Perceiver, PerceptionError};
use mobile_operator::prompting::{Role, TemplateSet};
use mobile_operator::sim::{DeviceSpec, SimHandle};
use mobile_operator::trace::Terminal;
use mobile_operator::{
    Instruction, Locale, Operation, PerceptionResult, ScreenState, StateId, Verdict,
};

fn world() -> SimHandle {
    SimHandle::new(Arc::new(DeviceSpec::demo()))
}

fn decision(op: &str) -> String {
    format!("### Thought ###\nnext\n### Action ###\n{op}\n### Operation ###\ndo it")
}

fn reflection(answer: char) -> String {
    format!("### Thought ###\nlooked\n### Answer ###\n{answer}")
}

fn agents(rules: Vec<ScriptedRule>) -> Agents {
    Agents::new(Arc::new(ScriptedBackend::new(rules)), TemplateSet::builtin(Locale::En))
}

fn no_memory() -> RunConfig {
    RunConfig {
        memory_enabled: false,
        ..RunConfig::default()
    }
}

fn ins() -> Instruction {
    Instruction::new("Do something").unwrap()
}

#[test]
fn oracle_run_follows_ground_truth() {
    let suite = Suite::demo();
    let SuiteDevice::Sim(spec) = &suite.device else { unreachable!() };
    for task in &suite.tasks {
        let run = run_sim_task(spec, task, &EvalOptions::default()).unwrap();
        assert_eq!(run.trace.terminal, Some(Terminal::Stopped), "{}", task.id);
        let ops: Vec<&Operation> = run.trace.history.iter().map(|r| &r.operation).collect();
        assert_eq!(ops, task.ground_truth.iter().collect::<Vec<_>>(), "{}", task.id);
        assert!(task.check(&run.final_state), "{}", task.id);
        assert_eq!(run.trace.rollback_mechanism, Some(RollbackMechanism::Snapshot));
        run.trace.verify().unwrap();
    }
}

#[test]
fn backend_failure_ends_the_task() {
    let w = world();
    let mut dev = w.clone();
    let trace = run_task(&ins(), &mut dev, &w, &agents(vec![]), &RunConfig::default());
    assert!(matches!(trace.terminal, Some(Terminal::BackendError { .. })));
    assert!(trace.iterations.is_empty());
}

#[test]
fn unusable_decisions_count_as_failures() {
    let w = world();
    let mut dev = w.clone();
    let a = agents(vec![ScriptedRule::fixed(Role::Decision, decision("Fly (1, 2)"))]);
    let mut events = Vec::new();
    let mut sink = |e: &Event| events.push(e.clone());
    let trace = run_task_with(
        &ins(),
        &mut dev,
        &w,
        &a,
        &no_memory(),
        Hooks {
            sink: Some(&mut sink),
            oracle: None,
        },
    );
    assert_eq!(trace.terminal, Some(Terminal::MaxConsecutiveFailures));
    assert_eq!(trace.iterations.len(), 3);
    assert!(trace.iterations.iter().all(|i| i.fault.is_some() && i.verdict() == Some(Verdict::Ineffective)));
    assert!(trace.history.is_empty());
    // One initial attempt plus two retries per iteration.
    let faults = events.iter().filter(|e| matches!(e, Event::DecisionFault { .. })).count();
    assert_eq!(faults, 9);
}

#[test]
fn invalid_operations_for_the_screen_are_faults() {
    let w = world();
    let mut dev = w.clone();
    // Typing without a keyboard.
    let a = agents(vec![ScriptedRule::fixed(Role::Decision, decision("Type (x)"))]);
    let trace = run_task(&ins(), &mut dev, &w, &a, &no_memory());
    assert_eq!(trace.terminal, Some(Terminal::MaxConsecutiveFailures));
    assert!(trace.iterations.iter().all(|i| i.screen_after.is_none()));
}

#[test]
fn iteration_cap_ends_the_task() {
    let w = world();
    let mut dev = w.clone();
    let a = agents(vec![
        ScriptedRule::fixed(Role::Decision, decision("Swipe (540, 2000), (540, 800)")),
        ScriptedRule::fixed(Role::Reflection, reflection('C')),
    ]);
    let cfg = RunConfig {
        max_iterations: 4,
        max_consecutive_failures: 100,
        ..no_memory()
    };
    let trace = run_task(&ins(), &mut dev, &w, &a, &cfg);
    assert_eq!(trace.terminal, Some(Terminal::MaxIterations));
    assert_eq!(trace.iterations.len(), 4);
}

#[test]
fn erroneous_verdict_rolls_back_and_keeps_history_clean() {
    let w = world();
    let mut dev = w.clone();
    let a = agents(vec![
        ScriptedRule::fixed(Role::Decision, decision("Open app (Settings)")),
        ScriptedRule::fixed(Role::Reflection, reflection('B')),
    ]);
    let home = w.lock().state_id();
    let trace = run_task(&ins(), &mut dev, &w, &a, &no_memory());
    assert_eq!(trace.terminal, Some(Terminal::MaxConsecutiveFailures));
    for it in &trace.iterations {
        assert_eq!(it.screen_before, home);
        assert_ne!(it.screen_after.as_ref(), Some(&home));
        assert_eq!(it.rollback.as_ref(), Some(&home));
    }
    assert!(trace.history.is_empty());
    assert_eq!(w.lock().state_id(), home);
}

#[test]
fn correct_steps_update_progress_and_stop_ends() {
    let w = world();
    let mut dev = w.clone();
    let step = Arc::new(Mutex::new(0usize));
    let s = step.clone();
    let a = agents(vec![
        ScriptedRule::for_role(Role::Decision, move |_| {
            let mut n = s.lock().unwrap();
            *n += 1;
            Ok(decision(if *n == 1 { "Open app (Settings)" } else { "Stop" }))
        }),
        ScriptedRule::fixed(Role::Reflection, reflection('A')),
        ScriptedRule::fixed(Role::Planning, "### Completed contents ###\nOpened Settings."),
    ]);
    let mut events = Vec::new();
    let mut sink = |e: &Event| events.push(e.clone());
    let trace = run_task_with(
        &ins(),
        &mut dev,
        &w,
        &a,
        &no_memory(),
        Hooks {
            sink: Some(&mut sink),
            oracle: None,
        },
    );
    assert_eq!(trace.terminal, Some(Terminal::Stopped));
    assert_eq!(trace.history.len(), 1);
    assert_eq!(trace.iterations[0].progress_snapshot.as_str(), "Opened Settings.");
    assert!(trace.iterations[1].is_stop());
    assert!(matches!(events.last(), Some(Event::Finished { terminal: Terminal::Stopped })));
    let kinds: Vec<&str> = events
        .iter()
        .map(|e| match e {
            Event::IterationStarted { .. } => "start",
            Event::Decided { .. } => "decided",
            Event::DecisionFault { .. } => "fault",
            Event::Reflected { .. } => "reflected",
            Event::Finished { .. } => "finished",
        })
        .collect();
    assert_eq!(kinds, ["start", "decided", "reflected", "start", "decided", "finished"]);
}

/// Wraps the simulator and fails on the n-th execute.
struct Flaky {
    inner: SimHandle,
    fail_at: usize,
    calls: usize,
}

impl Device for Flaky {
    fn screenshot(&mut self) -> Result<ScreenState, DeviceError> {
        self.inner.screenshot()
    }
    fn execute(&mut self, op: &Operation) -> Result<ExecutionReport, DeviceError> {
        self.calls += 1;
        if self.calls == self.fail_at {
            return Err(DeviceError::DeviceUnreachable("cable pulled".into()));
        }
        self.inner.execute(op)
    }
    fn revert_one(&mut self) -> Result<StateId, DeviceError> {
        self.inner.revert_one()
    }
    fn at_home(&mut self) -> Result<bool, DeviceError> {
        self.inner.at_home()
    }
    fn rollback_mechanism(&self) -> RollbackMechanism {
        RollbackMechanism::Snapshot
    }
}

#[test]
fn device_failure_ends_the_task() {
    let w = world();
    let mut dev = Flaky {
        inner: w.clone(),
        fail_at: 2,
        calls: 0,
    };
    let a = agents(vec![
        ScriptedRule::fixed(Role::Decision, decision("Swipe (540, 2000), (540, 800)")),
        ScriptedRule::fixed(Role::Reflection, reflection('C')),
    ]);
    let trace = run_task(&ins(), &mut dev, &w, &a, &no_memory());
    assert!(matches!(
        trace.terminal,
        Some(Terminal::DeviceError { ref message }) if message.contains("cable pulled")
    ));
    assert_eq!(trace.iterations.len(), 1);
}

struct Blind;

impl Perceiver for Blind {
    fn perceive(&self, _: &ScreenState) -> Result<PerceptionResult, PerceptionError> {
        Err(PerceptionError::ServiceUnavailable("down".into()))
    }
}

#[test]
fn perception_failure_ends_the_task() {
    let w = world();
    let mut dev = w.clone();
    let a = agents(vec![]);
    let trace = run_task(&ins(), &mut dev, &Blind, &a, &no_memory());
    assert!(matches!(trace.terminal, Some(Terminal::PerceptionError { .. })));
}

#[test]
fn decision_prompt_reports_the_previous_failure() {
    let w = world();
    let mut dev = w.clone();
    let backend = Arc::new(mobile_operator::backends::RecordingBackend::new(ScriptedBackend::new(vec![
        ScriptedRule::fixed(Role::Decision, decision("Swipe (540, 2000), (540, 800)")),
        ScriptedRule::fixed(Role::Reflection, reflection('C')),
    ])));
    let a = Agents::new(backend.clone(), TemplateSet::builtin(Locale::En));
    let cfg = RunConfig {
        max_iterations: 2,
        ..no_memory()
    };
    run_task(&ins(), &mut dev, &w, &a, &cfg);
    let decisions: Vec<String> = backend
        .requests()
        .into_iter()
        .filter(|r| r.role == Role::Decision)
        .map(|r| r.user)
        .collect();
    assert_eq!(decisions.len(), 2);
    assert!(!decisions[0].contains("Swipe (540, 2000), (540, 800)"));
    assert!(decisions[1].contains("Swipe (540, 2000), (540, 800)"));
}

#[test]
fn memory_updates_are_recorded_when_enabled() {
    let suite = Suite::demo();
    let SuiteDevice::Sim(spec) = &suite.device else { unreachable!() };
    let task = suite.task("weather-to-notes").unwrap();
    let run = run_sim_task(spec, task, &EvalOptions::default()).unwrap();
    let last = run.trace.iterations.last().unwrap();
    assert!(!last.memory_snapshot.is_empty());
    // Memory only grows.
    for pair in run.trace.iterations.windows(2) {
        assert!(pair[0].memory_snapshot.is_prefix_of(&pair[1].memory_snapshot));
    }
}
