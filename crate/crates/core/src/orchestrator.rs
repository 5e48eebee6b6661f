//! The control loop: perceive, remember, decide, execute, perceive, reflect,
//! then record, roll back or plan.

use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, Agents};
use crate::device::Device;
use crate::opspace::ScreenContext;
use crate::perception::{CachedPerception, Perceiver};
use crate::prompting::{DecisionInputs, LastReflection};
use crate::trace::{IterationRecord, TaskTrace, Terminal};
use crate::types::{
    Instruction, Locale, MemoryUnit, Operation, OperationRecord, PerceptionResult,
    ReflectionOutcome, ScreenState, StateId, TaskProgress, Verdict,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub max_iterations: usize,
    pub max_consecutive_failures: usize,
    pub locale: Locale,
    /// Attach suite hints to designated tasks.
    pub knowledge_injection: bool,
    /// Disabling skips every memory update (ablation).
    pub memory_enabled: bool,
    /// Extra decision attempts within one iteration after an unusable reply.
    pub decision_retries: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_iterations: 25,
            max_consecutive_failures: 3,
            locale: Locale::En,
            knowledge_injection: false,
            memory_enabled: true,
            decision_retries: 2,
        }
    }
}

/// Adds operation hints to an instruction; the text is unchanged.
pub fn inject_knowledge(ins: &Instruction, hints: &[String]) -> Instruction {
    ins.clone().with_hints(hints.iter().cloned())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    IterationStarted { index: usize, state: StateId },
    Decided { index: usize, operation: Operation },
    DecisionFault { index: usize, attempt: usize, message: String },
    Reflected { index: usize, verdict: Verdict, rollback: Option<StateId> },
    Finished { terminal: Terminal },
}

pub trait EventSink {
    fn event(&mut self, event: &Event);
}

impl<F: FnMut(&Event)> EventSink for F {
    fn event(&mut self, event: &Event) {
        self(event)
    }
}

/// Supplies ground-truth verdicts for evaluation.
pub trait VerdictOracle {
    /// Called right before `op` is executed.
    fn prepare(&mut self, device: &mut dyn Device, op: &Operation);
    /// Called after execution and reflection, before any rollback.
    fn judge(&mut self, device: &mut dyn Device, agent_verdict: Verdict) -> Option<Verdict>;
}

/// Judges operations against a ground-truth sequence using the device's
/// expected effects. Unchanged state is Ineffective, the state the next
/// ground-truth step leads to is Correct, anything else Erroneous.
pub struct GroundTruthOracle {
    gt: Vec<Operation>,
    cursor: usize,
    before: Option<StateId>,
    expected: Option<StateId>,
}

impl GroundTruthOracle {
    pub fn new(gt: Vec<Operation>) -> Self {
        GroundTruthOracle {
            gt,
            cursor: 0,
            before: None,
            expected: None,
        }
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    fn state(device: &mut dyn Device) -> Option<StateId> {
        device.screenshot().ok().map(|s| s.state_id().clone())
    }
}

impl VerdictOracle for GroundTruthOracle {
    fn prepare(&mut self, device: &mut dyn Device, _op: &Operation) {
        self.before = Self::state(device);
        self.expected = match self.gt.get(self.cursor) {
            Some(next) => device.expected_effect(next).ok().flatten(),
            None => None,
        };
    }

    fn judge(&mut self, device: &mut dyn Device, agent_verdict: Verdict) -> Option<Verdict> {
        let before = self.before.take()?;
        let after = Self::state(device)?;
        let verdict = if after == before {
            Verdict::Ineffective
        } else if self.expected.take().as_ref() == Some(&after) {
            Verdict::Correct
        } else {
            Verdict::Erroneous
        };
        // The agent's own Erroneous verdict rolls the step back.
        if verdict == Verdict::Correct && agent_verdict != Verdict::Erroneous {
            self.cursor += 1;
        }
        Some(verdict)
    }
}

#[derive(Default)]
pub struct Hooks<'a> {
    pub sink: Option<&'a mut dyn EventSink>,
    pub oracle: Option<&'a mut dyn VerdictOracle>,
}

impl Hooks<'_> {
    fn emit(&mut self, e: Event) {
        if let Some(s) = self.sink.as_mut() {
            s.event(&e);
        }
    }
}

pub fn run_task(
    ins: &Instruction,
    device: &mut dyn Device,
    perception: &dyn Perceiver,
    agents: &Agents,
    cfg: &RunConfig,
) -> TaskTrace {
    run_task_with(ins, device, perception, agents, cfg, Hooks::default())
}

enum Stop {
    Terminal(Terminal),
}

impl From<AgentError> for Stop {
    fn from(e: AgentError) -> Self {
        Stop::Terminal(Terminal::BackendError {
            message: e.to_string(),
        })
    }
}

impl From<crate::device::DeviceError> for Stop {
    fn from(e: crate::device::DeviceError) -> Self {
        Stop::Terminal(Terminal::DeviceError {
            message: e.to_string(),
        })
    }
}

impl From<crate::perception::PerceptionError> for Stop {
    fn from(e: crate::perception::PerceptionError) -> Self {
        Stop::Terminal(Terminal::PerceptionError {
            message: e.to_string(),
        })
    }
}

struct Loop<'a, 'h> {
    ins: &'a Instruction,
    device: &'a mut dyn Device,
    perception: CachedPerception<'a>,
    agents: &'a Agents,
    cfg: &'a RunConfig,
    hooks: Hooks<'h>,
    trace: TaskTrace,
    progress: TaskProgress,
    memory: MemoryUnit,
    last: Option<(Operation, ReflectionOutcome)>,
    failures: usize,
}

pub fn run_task_with(
    ins: &Instruction,
    device: &mut dyn Device,
    perception: &dyn Perceiver,
    agents: &Agents,
    cfg: &RunConfig,
    hooks: Hooks<'_>,
) -> TaskTrace {
    let mut trace = TaskTrace::new(ins.clone());
    trace.rollback_mechanism = Some(device.rollback_mechanism());
    let mut l = Loop {
        ins,
        device,
        perception: CachedPerception::new(perception),
        agents,
        cfg,
        hooks,
        trace,
        progress: TaskProgress::default(),
        memory: MemoryUnit::new(),
        last: None,
        failures: 0,
    };
    let terminal = l.run();
    tracing::info!(
        terminal = terminal.label(),
        iterations = l.trace.iterations.len(),
        history = l.trace.history.len(),
        "task finished"
    );
    l.hooks.emit(Event::Finished {
        terminal: terminal.clone(),
    });
    l.trace.terminal = Some(terminal);
    l.trace
}

impl Loop<'_, '_> {
    fn run(&mut self) -> Terminal {
        for t in 1..=self.cfg.max_iterations.max(1) {
            match self.iteration(t) {
                Ok(None) => {}
                Ok(Some(terminal)) | Err(Stop::Terminal(terminal)) => return terminal,
            }
        }
        Terminal::MaxIterations
    }

    fn observe(&mut self) -> Result<(ScreenState, PerceptionResult), Stop> {
        let screen = self.device.screenshot()?;
        let mut perc = self.perception.perceive(&screen)?;
        if let Some(k) = self.device.keyboard_active()? {
            perc.keyboard_active = k;
        }
        Ok((screen, perc))
    }

    fn iteration(&mut self, t: usize) -> Result<Option<Terminal>, Stop> {
        let (screen, perc) = self.observe()?;
        self.hooks.emit(Event::IterationStarted {
            index: t,
            state: screen.state_id().clone(),
        });
        if self.cfg.memory_enabled {
            self.memory = self
                .agents
                .update_memory(self.ins, &self.memory, &screen, &perc, t)?;
        }
        let ctx = ScreenContext {
            width: screen.width(),
            height: screen.height(),
            keyboard_active: perc.keyboard_active,
            at_home: self.device.at_home()?,
        };

        let record = self.decide(t, &screen, &perc, &ctx)?;
        let record = match record {
            Ok(r) => r,
            Err(fault) => {
                let iter = IterationRecord {
                    index: t,
                    screen_before: screen.state_id().clone(),
                    perception_before: perc,
                    record: None,
                    fault: Some(fault.clone()),
                    reflection: Some(ReflectionOutcome {
                        verdict: Verdict::Ineffective,
                        thought: format!("No usable operation: {fault}"),
                    }),
                    screen_after: None,
                    rollback: None,
                    oracle_verdict: None,
                    progress_snapshot: self.progress.clone(),
                    memory_snapshot: self.memory.clone(),
                };
                self.push(iter);
                self.last = None;
                return Ok(self.count_failure());
            }
        };
        self.hooks.emit(Event::Decided {
            index: t,
            operation: record.operation.clone(),
        });

        if record.operation.is_stop() {
            let iter = IterationRecord {
                index: t,
                screen_before: screen.state_id().clone(),
                perception_before: perc,
                record: Some(record),
                fault: None,
                reflection: None,
                screen_after: None,
                rollback: None,
                oracle_verdict: None,
                progress_snapshot: self.progress.clone(),
                memory_snapshot: self.memory.clone(),
            };
            self.push(iter);
            return Ok(Some(Terminal::Stopped));
        }

        if let Some(o) = self.hooks.oracle.as_mut() {
            o.prepare(&mut *self.device, &record.operation);
        }
        let report = self.device.execute(&record.operation)?;
        tracing::debug!(op = %record.operation, changed = report.changed, "executed");
        let (after, after_perc) = self.observe()?;
        let outcome = self.reflect(&record, (&screen, &perc), (&after, &after_perc))?;
        let oracle_verdict = match self.hooks.oracle.as_mut() {
            Some(o) => o.judge(&mut *self.device, outcome.verdict),
            None => None,
        };

        let rollback = if outcome.verdict == Verdict::Erroneous {
            Some(self.device.revert_one()?)
        } else {
            None
        };
        if outcome.verdict == Verdict::Correct {
            let mut history = self.trace.history.clone();
            history.push(record.clone());
            self.progress = self
                .agents
                .plan_update(self.ins, &history, &self.progress, &self.memory)?;
        }
        self.hooks.emit(Event::Reflected {
            index: t,
            verdict: outcome.verdict,
            rollback: rollback.clone(),
        });
        let verdict = outcome.verdict;
        self.last = Some((record.operation.clone(), outcome.clone()));
        let iter = IterationRecord {
            index: t,
            screen_before: screen.state_id().clone(),
            perception_before: perc,
            record: Some(record),
            fault: None,
            reflection: Some(outcome),
            screen_after: Some(after.state_id().clone()),
            rollback,
            oracle_verdict,
            progress_snapshot: self.progress.clone(),
            memory_snapshot: self.memory.clone(),
        };
        self.push(iter);
        if verdict == Verdict::Correct {
            self.failures = 0;
            Ok(None)
        } else {
            Ok(self.count_failure())
        }
    }

    /// Up to `1 + decision_retries` attempts; `Ok(Err(msg))` when all were unusable.
    fn decide(
        &mut self,
        t: usize,
        screen: &ScreenState,
        perc: &PerceptionResult,
        ctx: &ScreenContext,
    ) -> Result<Result<OperationRecord, String>, Stop> {
        let mut fault: Option<String> = None;
        for attempt in 0..=self.cfg.decision_retries {
            let inputs = DecisionInputs {
                instruction: self.ins,
                progress: &self.progress,
                memory: &self.memory,
                last_reflection: self.last.as_ref().map(|(op, outcome)| LastReflection {
                    operation: op,
                    outcome,
                }),
                screen,
                perception: perc,
                history: &self.trace.history,
                fault: fault.as_deref(),
            };
            match self.agents.decide(&inputs, ctx) {
                Ok(r) => return Ok(Ok(r)),
                Err(AgentError::Fault(f)) => {
                    let message = f.to_string();
                    tracing::warn!(iteration = t, attempt, %message, "unusable decision");
                    self.hooks.emit(Event::DecisionFault {
                        index: t,
                        attempt,
                        message: message.clone(),
                    });
                    fault = Some(message);
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(Err(fault.unwrap_or_default()))
    }

    fn reflect(
        &mut self,
        record: &OperationRecord,
        before: (&ScreenState, &PerceptionResult),
        after: (&ScreenState, &PerceptionResult),
    ) -> Result<ReflectionOutcome, Stop> {
        let mut last_err = None;
        for _ in 0..=self.cfg.decision_retries {
            match self.agents.reflect(self.ins, &self.memory, record, before, after) {
                Ok(o) => return Ok(o),
                Err(AgentError::Reply(e)) => last_err = Some(AgentError::Reply(e)),
                Err(e) => return Err(e.into()),
            }
        }
        Err(last_err.expect("at least one attempt").into())
    }

    fn push(&mut self, iter: IterationRecord) {
        self.trace
            .append(iter)
            .expect("iterations are appended in order with reflections");
    }

    fn count_failure(&mut self) -> Option<Terminal> {
        self.failures += 1;
        (self.failures >= self.cfg.max_consecutive_failures.max(1))
            .then_some(Terminal::MaxConsecutiveFailures)
    }
}
