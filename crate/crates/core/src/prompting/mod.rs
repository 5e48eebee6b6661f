//! Prompt rendering for the planning, decision, memory and reflection roles,
//! and parsing of their sectioned replies.
//!
//! Each (role, phase, locale) has one template file. The built-in English and
//! Chinese sets are compiled in; [`TemplateSet::from_dir`] loads a replacement
//! set from disk.

mod reply;
mod template;

use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use reply::{normalize_answer, parse_sectioned_reply, ReplyError, SectionedReply};
pub use template::{Bindings, Template, TemplateError};

use crate::opspace::render_operation;
use crate::types::{
    ElementKind, Instruction, Locale, MemoryUnit, Operation, OperationRecord, PerceptionResult,
    ReflectionOutcome, ScreenState, TaskProgress, Verdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Planning,
    Decision,
    Memory,
    Reflection,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Planning => "planning",
            Role::Decision => "decision",
            Role::Memory => "memory",
            Role::Reflection => "reflection",
        }
    }
}

/// A rendered prompt. Planning has no images, decision and memory one,
/// reflection two (before, after).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub role: Role,
    pub system: String,
    pub user: String,
    pub images: Vec<ScreenState>,
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("planning needs at least one completed operation")]
    EmptyHistory,
}

/// Reply headers the agents read.
pub mod headers {
    pub const COMPLETED_CONTENTS: &str = "Completed contents";
    pub const THOUGHT: &str = "Thought";
    pub const ACTION: &str = "Action";
    pub const OPERATION: &str = "Operation";
    pub const ANSWER: &str = "Answer";
    pub const IMPORTANT_CONTENT: &str = "Important content";
}

const FILES: [&str; 5] = ["planning_first", "planning", "decision", "memory", "reflection"];

/// What the decision prompt reports about the previous operation.
#[derive(Debug, Clone, Copy)]
pub struct LastReflection<'a> {
    pub operation: &'a Operation,
    pub outcome: &'a ReflectionOutcome,
}

pub struct DecisionInputs<'a> {
    pub instruction: &'a Instruction,
    pub progress: &'a TaskProgress,
    pub memory: &'a MemoryUnit,
    pub last_reflection: Option<LastReflection<'a>>,
    pub screen: &'a ScreenState,
    pub perception: &'a PerceptionResult,
    pub history: &'a [OperationRecord],
    /// Why the previous reply in this iteration was rejected.
    pub fault: Option<&'a str>,
}

#[derive(Debug, Clone)]
pub struct TemplateSet {
    locale: Locale,
    planning_first: Template,
    planning: Template,
    decision: Template,
    memory: Template,
    reflection: Template,
}

impl TemplateSet {
    /// The compiled-in set for `locale`, parsed once per process.
    pub fn builtin(locale: Locale) -> Arc<TemplateSet> {
        static EN: OnceLock<Arc<TemplateSet>> = OnceLock::new();
        static ZH: OnceLock<Arc<TemplateSet>> = OnceLock::new();
        let (cell, sources) = match locale {
            Locale::En => (
                &EN,
                [
                    include_str!("../../templates/en/planning_first.txt"),
                    include_str!("../../templates/en/planning.txt"),
                    include_str!("../../templates/en/decision.txt"),
                    include_str!("../../templates/en/memory.txt"),
                    include_str!("../../templates/en/reflection.txt"),
                ],
            ),
            Locale::Zh => (
                &ZH,
                [
                    include_str!("../../templates/zh/planning_first.txt"),
                    include_str!("../../templates/zh/planning.txt"),
                    include_str!("../../templates/zh/decision.txt"),
                    include_str!("../../templates/zh/memory.txt"),
                    include_str!("../../templates/zh/reflection.txt"),
                ],
            ),
        };
        cell.get_or_init(|| {
            Arc::new(Self::from_sources(locale, sources).expect("built-in templates are valid"))
        })
        .clone()
    }

    /// Loads `<root>/<locale>/<name>.txt` for every template.
    pub fn from_dir(root: impl AsRef<Path>, locale: Locale) -> Result<Self, PromptError> {
        let dir = root.as_ref().join(locale.as_str());
        let mut sources = Vec::with_capacity(FILES.len());
        for name in FILES {
            let path = dir.join(format!("{name}.txt"));
            let text = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })?;
            sources.push(text);
        }
        let sources: [&str; 5] = std::array::from_fn(|i| sources[i].as_str());
        Self::from_sources(locale, sources)
    }

    fn from_sources(locale: Locale, sources: [&str; 5]) -> Result<Self, PromptError> {
        let [pf, p, d, m, r] = sources;
        let required: [(&str, &str, &[&str]); 5] = [
            ("planning_first", pf, &["system", "user", "hint_item", "focus_item"]),
            ("planning", p, &["system", "user", "hint_item", "focus_item", "history_item"]),
            (
                "decision",
                d,
                &["system", "user", "fault", "hint_item", "focus_item", "history_item", "perception_item"],
            ),
            ("memory", m, &["system", "user", "focus_item", "perception_item"]),
            ("reflection", r, &["system", "user", "hint_item", "focus_item", "perception_item"]),
        ];
        let mut parsed = Vec::with_capacity(5);
        for (name, src, sections) in required {
            let t = Template::parse(&format!("{}/{name}", locale.as_str()), src)?;
            for s in sections {
                if !t.has_section(s) {
                    return Err(TemplateError::MissingSection {
                        template: t.name().to_string(),
                        section: s.to_string(),
                    }
                    .into());
                }
            }
            parsed.push(t);
        }
        let mut it = parsed.into_iter();
        let mut next = || it.next().expect("five templates");
        Ok(TemplateSet {
            locale,
            planning_first: next(),
            planning: next(),
            decision: next(),
            memory: next(),
            reflection: next(),
        })
    }

    pub fn locale(&self) -> Locale {
        self.locale
    }

    /// Planning prompt after the latest correct operation. A one-step
    /// history uses the first-operation template.
    pub fn render_planning_prompt(
        &self,
        ins: &Instruction,
        history: &[OperationRecord],
        progress: &TaskProgress,
        memory: &MemoryUnit,
    ) -> Result<PromptBundle, PromptError> {
        let last = history.last().ok_or(PromptError::EmptyHistory)?;
        let first = history.len() == 1;
        let t = if first { &self.planning_first } else { &self.planning };
        let mut b = common(t, ins, memory)?;
        if first {
            b = b
                .text("thought", one_line(&last.thought))
                .text("action", render_operation(&last.operation));
        } else {
            b = b
                .text("history", history_lines(t, history)?)
                .text("progress", progress.as_str());
        }
        Ok(PromptBundle {
            role: Role::Planning,
            system: t.render("system", &b)?,
            user: t.render("user", &b)?,
            images: Vec::new(),
        })
    }

    pub fn render_decision_prompt(&self, inp: &DecisionInputs<'_>) -> Result<PromptBundle, PromptError> {
        let t = &self.decision;
        let advisory = inp
            .last_reflection
            .filter(|r| r.outcome.verdict != Verdict::Correct);
        let mut b = common(t, inp.instruction, inp.memory)?
            .text("width", inp.screen.width().to_string())
            .text("height", inp.screen.height().to_string())
            .text("perception", perception_lines(t, inp.perception)?)
            .flag("keyboard", inp.perception.keyboard_active)
            .flag("history", !inp.history.is_empty())
            .text("history", history_lines(t, inp.history)?)
            .text("progress", inp.progress.as_str())
            .flag("reflection", advisory.is_some())
            .flag(
                "erroneous",
                advisory.is_some_and(|r| r.outcome.verdict == Verdict::Erroneous),
            )
            .flag(
                "ineffective",
                advisory.is_some_and(|r| r.outcome.verdict == Verdict::Ineffective),
            );
        if let Some(r) = advisory {
            b = b.text("reflection_action", render_operation(r.operation));
        }
        let mut user = t.render("user", &b)?;
        if let Some(fault) = inp.fault {
            user.push_str(&t.render("fault", &b.clone().text("fault", one_line(fault)))?);
        }
        Ok(PromptBundle {
            role: Role::Decision,
            system: t.render("system", &b)?,
            user,
            images: vec![inp.screen.clone()],
        })
    }

    pub fn render_memory_prompt(
        &self,
        ins: &Instruction,
        memory: &MemoryUnit,
        screen: &ScreenState,
        perception: &PerceptionResult,
    ) -> Result<PromptBundle, PromptError> {
        let t = &self.memory;
        let b = focus(t, Bindings::new(), memory)?
            .text("instruction", ins.text())
            .text("width", screen.width().to_string())
            .text("height", screen.height().to_string())
            .text("perception", perception_lines(t, perception)?);
        Ok(PromptBundle {
            role: Role::Memory,
            system: t.render("system", &b)?,
            user: t.render("user", &b)?,
            images: vec![screen.clone()],
        })
    }

    pub fn render_reflection_prompt(
        &self,
        ins: &Instruction,
        memory: &MemoryUnit,
        record: &OperationRecord,
        before: (&ScreenState, &PerceptionResult),
        after: (&ScreenState, &PerceptionResult),
    ) -> Result<PromptBundle, PromptError> {
        let t = &self.reflection;
        let b = common(t, ins, memory)?
            .text("width", after.0.width().to_string())
            .text("height", after.0.height().to_string())
            .text("before_perception", perception_lines(t, before.1)?)
            .flag("before_keyboard", before.1.keyboard_active)
            .text("after_perception", perception_lines(t, after.1)?)
            .flag("after_keyboard", after.1.keyboard_active)
            .text("thought", one_line(&record.thought))
            .text("action", render_operation(&record.operation));
        Ok(PromptBundle {
            role: Role::Reflection,
            system: t.render("system", &b)?,
            user: t.render("user", &b)?,
            images: vec![before.0.clone(), after.0.clone()],
        })
    }
}

/// Instruction, hint and focus-content bindings shared by most templates.
fn common(t: &Template, ins: &Instruction, memory: &MemoryUnit) -> Result<Bindings, TemplateError> {
    let mut hints = String::new();
    for h in ins.hints() {
        hints.push_str(&t.render("hint_item", &Bindings::new().text("hint", one_line(h)))?);
    }
    focus(t, Bindings::new(), memory).map(|b| b.text("instruction", ins.text()).text("hints", hints))
}

fn focus(t: &Template, b: Bindings, memory: &MemoryUnit) -> Result<Bindings, TemplateError> {
    let mut lines = String::new();
    for e in memory.entries() {
        lines.push_str(&t.render("focus_item", &Bindings::new().text("content", one_line(&e.content)))?);
        lines.push('\n');
    }
    Ok(b.flag("focus", !memory.is_empty()).text("focus", lines))
}

fn history_lines(t: &Template, history: &[OperationRecord]) -> Result<String, TemplateError> {
    let mut out = String::new();
    for (i, r) in history.iter().enumerate() {
        let b = Bindings::new()
            .text("n", (i + 1).to_string())
            .text("thought", one_line(&r.thought))
            .text("action", render_operation(&r.operation));
        out.push_str(&t.render("history_item", &b)?);
        out.push('\n');
    }
    Ok(out)
}

fn perception_lines(t: &Template, p: &PerceptionResult) -> Result<String, TemplateError> {
    let mut out = String::new();
    for e in &p.elements {
        let b = Bindings::new()
            .text("x", e.center.0.to_string())
            .text("y", e.center.1.to_string())
            .flag("icon", e.kind == ElementKind::Icon)
            .text("content", one_line(&e.content));
        out.push_str(&t.render("perception_item", &b)?);
        out.push('\n');
    }
    Ok(out)
}

/// Collapses line breaks so one value stays on one prompt line.
fn one_line(s: &str) -> String {
    if s.contains(['\n', '\r']) {
        s.split(['\n', '\r'])
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    } else {
        s.to_string()
    }
}
