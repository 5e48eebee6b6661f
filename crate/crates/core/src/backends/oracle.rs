//! A scripted policy that plays a ground-truth operation sequence on the
//! simulator, answering all four agent roles.
//!
//! Decision replies emit the next unconsumed ground-truth operation, or a
//! planted fault. Reflection replies compare simulator states: unchanged is
//! C, the state the intended ground-truth operation leads to is A, anything
//! else is B. Planning replies list the completed steps. Memory replies
//! report on-screen text that starts with one of the script's focus
//! prefixes.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatRequest, ScriptedBackend, ScriptedRule};
use crate::opspace::{render_operation, validate_operation, ScreenContext};
use crate::prompting::Role;
use crate::sim::{SimHandle, Simulator};
use crate::types::{Operation, StateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// A tap on a blank coordinate.
    Ineffective,
    /// A tap on an element that leads somewhere else.
    Erroneous,
}

/// Fires once, the first time the decision for ground-truth step `step`
/// (0-based) is requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedFault {
    pub step: usize,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub faults: Vec<PlannedFault>,
}

impl FaultPlan {
    pub fn none() -> Self {
        FaultPlan::default()
    }

    pub fn new(faults: impl IntoIterator<Item = (usize, FaultKind)>) -> Self {
        FaultPlan {
            faults: faults
                .into_iter()
                .map(|(step, kind)| PlannedFault { step, kind })
                .collect(),
        }
    }

    /// One ineffective fault at step 1 and one erroneous fault at step 2.
    pub fn one_of_each() -> Self {
        FaultPlan::new([(1, FaultKind::Ineffective), (2, FaultKind::Erroneous)])
    }

    pub fn len(&self) -> usize {
        self.faults.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faults.is_empty()
    }
}

/// The text typed at `step` comes from the focus-content entry starting with
/// `prefix`, read from the decision prompt. Without that entry the policy
/// types a placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecallStep {
    pub step: usize,
    pub prefix: String,
}

/// At `step` the policy only finds the right operation when `phrase` appears
/// in the decision prompt (through an injected hint); otherwise it emits
/// `wrong`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HintGate {
    pub step: usize,
    pub phrase: String,
    pub wrong: Operation,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleScript {
    pub focus_prefixes: Vec<String>,
    pub recall: Vec<RecallStep>,
    pub hint_gated: Vec<HintGate>,
}

pub const RECALL_PLACEHOLDER: &str = "(nothing remembered)";

#[derive(Debug)]
struct Pending {
    before: StateId,
    expected: StateId,
    on_path: bool,
    summary: String,
}

#[derive(Debug, Default)]
struct OracleState {
    cursor: usize,
    fired: Vec<bool>,
    pending: Option<Pending>,
    /// State the world must be in for the next decision.
    settled: Option<StateId>,
    done: Vec<String>,
}

#[derive(Clone)]
pub struct OraclePolicy {
    world: SimHandle,
    gt: Arc<Vec<Operation>>,
    faults: Arc<FaultPlan>,
    script: Arc<OracleScript>,
    state: Arc<Mutex<OracleState>>,
}

impl OraclePolicy {
    pub fn new(world: SimHandle, gt: Vec<Operation>, faults: FaultPlan, script: OracleScript) -> Self {
        let fired = vec![false; faults.len()];
        OraclePolicy {
            world,
            gt: Arc::new(gt),
            faults: Arc::new(faults),
            script: Arc::new(script),
            state: Arc::new(Mutex::new(OracleState {
                fired,
                ..OracleState::default()
            })),
        }
    }

    /// Ground-truth steps consumed so far.
    pub fn cursor(&self) -> usize {
        self.lock().cursor
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, OracleState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn rules(&self) -> Vec<ScriptedRule> {
        let (d, r, p, m) = (self.clone(), self.clone(), self.clone(), self.clone());
        vec![
            ScriptedRule::for_role(Role::Decision, move |req| d.decide(req)),
            ScriptedRule::for_role(Role::Reflection, move |req| r.reflect(req)),
            ScriptedRule::for_role(Role::Planning, move |_| Ok(p.plan())),
            ScriptedRule::for_role(Role::Memory, move |req| Ok(m.remember_reply(req))),
        ]
    }

    pub fn backend(&self) -> ScriptedBackend {
        ScriptedBackend::new(self.rules())
    }

    fn decide(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let sim = self.world.lock();
        let mut st = self.lock();
        let current = sim.state_id();
        if let Some(settled) = &st.settled {
            if *settled != current {
                return Err(BackendError::InconsistentWorld(format!(
                    "world is at {current} but step {} expects {settled}",
                    st.cursor + 1
                )));
            }
        }
        let Some(gt_op) = self.gt.get(st.cursor).cloned() else {
            st.pending = None;
            return Ok(format_decision(
                "All steps of the instruction are done.",
                &Operation::Stop,
                "Finish the task.",
            ));
        };
        let ctx = ScreenContext {
            width: sim.spec().width,
            height: sim.spec().height,
            keyboard_active: sim.state().keyboard,
            at_home: sim.at_home(),
        };
        let intended = self.intended(&gt_op, st.cursor, req);
        validate_operation(&intended, &ctx).map_err(|e| {
            BackendError::InconsistentWorld(format!(
                "step {} ({}) is not possible here: {e}",
                st.cursor + 1,
                render_operation(&intended)
            ))
        })?;
        let expected = sim.expected_effect(&gt_op);

        let fault = self
            .faults
            .faults
            .iter()
            .enumerate()
            .find(|(i, f)| f.step == st.cursor && !st.fired[*i])
            .map(|(i, f)| (i, f.kind));
        let op = match fault {
            Some((i, kind)) => {
                st.fired[i] = true;
                fault_operation(&sim, kind, &current, &expected)
            }
            None => intended.clone(),
        };
        let on_path = op == gt_op;
        let summary = describe(&sim, &op);
        st.pending = Some(Pending {
            before: current.clone(),
            expected,
            on_path,
            summary: summary.clone(),
        });
        st.settled = Some(current);
        Ok(format_decision(
            &format!("Step {} of the instruction: {}", st.cursor + 1, describe(&sim, &intended)),
            &op,
            &summary,
        ))
    }

    /// The ground-truth operation as this policy can see it from the prompt.
    fn intended(&self, gt_op: &Operation, step: usize, req: &ChatRequest) -> Operation {
        if let Some(gate) = self.script.hint_gated.iter().find(|g| g.step == step) {
            if !req.user.contains(&gate.phrase) {
                return gate.wrong.clone();
            }
        }
        if let Some(recall) = self.script.recall.iter().find(|r| r.step == step) {
            let text = req
                .user
                .lines()
                .find_map(|l| l.strip_prefix(recall.prefix.as_str()))
                .map(str::trim)
                .unwrap_or(RECALL_PLACEHOLDER);
            return Operation::type_text(text);
        }
        gt_op.clone()
    }

    fn reflect(&self, _req: &ChatRequest) -> Result<String, BackendError> {
        let sim = self.world.lock();
        let mut st = self.lock();
        let pending = st.pending.take().ok_or_else(|| {
            BackendError::InconsistentWorld("reflection requested without a pending operation".into())
        })?;
        let after = sim.state_id();
        let (letter, thought) = if after == pending.before {
            ('C', "The screen did not change.")
        } else if pending.on_path && after == pending.expected {
            st.cursor += 1;
            st.settled = Some(after);
            st.done.push(pending.summary);
            ('A', "The screen changed as the operation intended.")
        } else {
            ('B', "The operation led to a page that does not serve the instruction.")
        };
        Ok(format!("### Thought ###\n{thought}\n### Answer ###\n{letter}\n"))
    }

    fn plan(&self) -> String {
        let st = self.lock();
        let mut out = String::from("### Completed contents ###\n");
        for (i, s) in st.done.iter().enumerate() {
            out.push_str(&format!("Step {}: {s}\n", i + 1));
        }
        out
    }

    fn remember_reply(&self, req: &ChatRequest) -> String {
        // Focus entries appear in the prompt as whole lines; perception lines
        // carry a coordinate prefix, so an exact line match means "remembered".
        let sim = self.world.lock();
        let visible = sim.visible(sim.state());
        let found = visible.iter().find(|v| {
            self.script
                .focus_prefixes
                .iter()
                .any(|p| v.content.starts_with(p.as_str()))
                && !req.user.lines().any(|l| l == v.content)
        });
        match found {
            Some(v) => format!("### Important content ###\n{}\n", v.content),
            None => "### Important content ###\nNone\n".to_string(),
        }
    }
}

fn format_decision(thought: &str, op: &Operation, description: &str) -> String {
    format!(
        "### Thought ###\n{thought}\n### Action ###\n{}\n### Operation ###\n{description}\n",
        render_operation(op)
    )
}

fn fault_operation(sim: &Simulator, kind: FaultKind, current: &StateId, expected: &StateId) -> Operation {
    match kind {
        FaultKind::Ineffective => match sim.blank_point() {
            Some((x, y)) => Operation::tap(x, y),
            None => Operation::swipe(1, 1, 2, 2),
        },
        FaultKind::Erroneous => sim
            .tap_targets()
            .into_iter()
            .map(|(_, op)| op)
            .find(|op| {
                let e = sim.expected_effect(op);
                e != *current && e != *expected
            })
            .unwrap_or(Operation::Home),
    }
}

fn describe(sim: &Simulator, op: &Operation) -> String {
    match op {
        Operation::OpenApp { name } => format!("Open the {name} app."),
        Operation::Tap { x, y } => {
            let label = sim
                .visible(sim.state())
                .into_iter()
                .find(|v| v.bbox.contains(*x, *y))
                .map(|v| v.content);
            match label {
                Some(l) => format!("Tap \"{l}\"."),
                None => format!("Tap ({x}, {y})."),
            }
        }
        Operation::Swipe { x1, y1, x2, y2 } => {
            let dir = if y2.abs_diff(*y1) > x2.abs_diff(*x1) {
                if y2 < y1 { "up" } else { "down" }
            } else if x2 < x1 {
                "left"
            } else {
                "right"
            };
            format!("Swipe {dir}.")
        }
        Operation::Type { text } => format!("Type \"{text}\"."),
        Operation::Home => "Return to the home screen.".to_string(),
        Operation::Stop => "Finish the task.".to_string(),
    }
}
