//! Task suites: TOML documents listing tasks with ground truth and a success
//! predicate.
//!
//! ```toml
//! name = "demo"
//! device = "demo_device.toml"   # simulator spec, relative to this file, or "adb"
//!
//! [[task]]
//! id = "settings-dark-mode"
//! category = "system_app"
//! level = "basic"
//! instruction = "Turn on dark mode"
//! ground_truth = ["Open app (Settings)", "Tap (540, 370)", "Tap (930, 370)"]
//! success = [{ state_contains = { key = "dark_mode", value = "on" } }]
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::backends::OracleScript;
use crate::opspace::{validate_operation, ScreenContext};
use crate::sim::{DeviceSpec, SimState, Simulator};
use crate::types::{Locale, Operation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    SystemApp,
    ExternalApp,
    MultiApp,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::SystemApp, Category::ExternalApp, Category::MultiApp];

    pub fn label(self) -> &'static str {
        match self {
            Category::SystemApp => "System app",
            Category::ExternalApp => "External app",
            Category::MultiApp => "Multi-app",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Basic,
    Advanced,
}

impl Level {
    pub const ALL: [Level; 2] = [Level::Basic, Level::Advanced];

    pub fn label(self) -> &'static str {
        match self {
            Level::Basic => "Basic",
            Level::Advanced => "Advanced",
        }
    }
}

/// One predicate over the final simulator state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    ScreenIs(String),
    FieldEquals { field: String, value: String },
    StateContains { key: String, value: String },
}

impl Check {
    pub fn holds(&self, state: &SimState) -> bool {
        match self {
            Check::ScreenIs(id) => state.screen == *id,
            Check::FieldEquals { field, value } => state.field(field) == value,
            Check::StateContains { key, value } => state.state_values(key).iter().any(|v| v == value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: String,
    pub category: Category,
    pub level: Level,
    pub instruction: String,
    #[serde(default)]
    pub locale: Locale,
    pub ground_truth: Vec<Operation>,
    /// All checks must hold. Empty means success is judged by a person
    /// (real-device suites).
    #[serde(default)]
    pub success: Vec<Check>,
    #[serde(default)]
    pub knowledge: Vec<String>,
    /// Behaviour of the scripted oracle policy on this task.
    #[serde(default)]
    pub script: OracleScript,
}

impl TaskSpec {
    pub fn is_manual(&self) -> bool {
        self.success.is_empty()
    }

    pub fn check(&self, state: &SimState) -> bool {
        !self.success.is_empty() && self.success.iter().all(|c| c.holds(state))
    }
}

#[derive(Debug, Clone)]
pub enum SuiteDevice {
    Sim(Arc<DeviceSpec>),
    Adb,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    #[serde(default)]
    name: String,
    device: String,
    #[serde(rename = "task", default)]
    tasks: Vec<TaskSpec>,
}

#[derive(Debug, Clone)]
pub struct Suite {
    pub name: String,
    pub device: SuiteDevice,
    pub tasks: Vec<TaskSpec>,
}

const DEMO_SUITE: &str = include_str!("../../fixtures/demo_suite.toml");
const KNOWLEDGE_SUITE: &str = include_str!("../../fixtures/knowledge_suite.toml");

impl Suite {
    /// Parses a suite. `device` paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, EvalError> {
        let file: SuiteFile = toml::from_str(text).map_err(|e| EvalError::Schema(e.to_string()))?;
        let device = if file.device == "adb" {
            SuiteDevice::Adb
        } else {
            let path = base_dir.join(&file.device);
            SuiteDevice::Sim(Arc::new(DeviceSpec::from_path(&path).map_err(|e| EvalError::Device {
                path: path.clone(),
                message: e.to_string(),
            })?))
        };
        Self::assemble(file, device)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Self::from_toml_str(&text, &base)
    }

    /// The bundled ten-task suite on the demo device.
    pub fn demo() -> Self {
        Self::bundled(DEMO_SUITE)
    }

    /// Bundled suite with a hint-dependent task.
    pub fn knowledge_demo() -> Self {
        Self::bundled(KNOWLEDGE_SUITE)
    }

    fn bundled(text: &str) -> Self {
        let file: SuiteFile = toml::from_str(text).expect("bundled suite parses");
        Self::assemble(file, SuiteDevice::Sim(Arc::new(DeviceSpec::demo()))).expect("bundled suite is valid")
    }

    fn assemble(file: SuiteFile, device: SuiteDevice) -> Result<Self, EvalError> {
        let suite = Suite {
            name: file.name,
            device,
            tasks: file.tasks,
        };
        suite.validate()?;
        Ok(suite)
    }

    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn has_hints(&self) -> bool {
        self.tasks.iter().any(|t| !t.knowledge.is_empty())
    }

    /// Structural checks, plus a ground-truth replay on simulator suites.
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.tasks.is_empty() {
            return Err(EvalError::Schema("suite has no tasks".into()));
        }
        let mut ids = BTreeSet::new();
        for t in &self.tasks {
            let bad = |m: String| EvalError::InvalidTask { id: t.id.clone(), message: m };
            if t.id.trim().is_empty() {
                return Err(EvalError::Schema("task with empty id".into()));
            }
            if !ids.insert(t.id.as_str()) {
                return Err(bad("duplicate task id".into()));
            }
            if t.instruction.trim().is_empty() {
                return Err(bad("empty instruction".into()));
            }
            if t.ground_truth.is_empty() {
                return Err(bad("empty ground truth".into()));
            }
            if t.ground_truth.iter().any(Operation::is_stop) {
                return Err(bad("ground truth must not contain Stop".into()));
            }
            let n = t.ground_truth.len();
            let steps = t.script.recall.iter().map(|r| r.step).chain(t.script.hint_gated.iter().map(|h| h.step));
            if let Some(s) = steps.into_iter().find(|&s| s >= n) {
                return Err(bad(format!("script step {s} is past the ground truth ({n} steps)")));
            }
            if let SuiteDevice::Sim(spec) = &self.device {
                if t.is_manual() {
                    return Err(bad("simulator tasks need a success check".into()));
                }
                replay_ground_truth(spec, t).map_err(bad)?;
            }
        }
        Ok(())
    }
}

/// Plays a task's ground truth on a fresh simulator. Every step must be
/// valid and change the state, and the success check must hold at the end.
pub fn replay_ground_truth(spec: &Arc<DeviceSpec>, task: &TaskSpec) -> Result<SimState, String> {
    let mut sim = Simulator::new(spec.clone());
    for (i, op) in task.ground_truth.iter().enumerate() {
        let ctx = ScreenContext {
            width: spec.width,
            height: spec.height,
            keyboard_active: sim.state().keyboard,
            at_home: sim.at_home(),
        };
        validate_operation(op, &ctx).map_err(|e| format!("ground truth step {i} ({op}): {e}"))?;
        let before = sim.state_id();
        sim.execute(op);
        if sim.state_id() == before {
            return Err(format!("ground truth step {i} ({op}) has no effect on {}", sim.state().screen));
        }
    }
    if !task.check(sim.state()) {
        return Err("success check does not hold after the ground truth".into());
    }
    Ok(sim.state().clone())
}
