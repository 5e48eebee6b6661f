//! Fixed bindings for the golden prompt files.

use std::path::Path;

use mobile_operator::{
    BBox, ElementKind, Instruction, MemoryUnit, Operation, OperationRecord, PerceptionElement,
    PerceptionResult, ScreenState, StateId, TaskProgress,
};
use mobile_operator::prompting::{DecisionInputs, PromptBundle, TemplateSet};
use mobile_operator::Locale;

pub fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn screen(id: &str) -> ScreenState {
    ScreenState::new(vec![0u8; 4], 1080, 2340, StateId::new(id)).unwrap()
}

pub fn el(kind: ElementKind, content: &str, b: [u32; 4]) -> PerceptionElement {
    PerceptionElement::new(kind, content, BBox::from(b))
}

pub fn history() -> Vec<OperationRecord> {
    vec![
        OperationRecord {
            thought: "Open Settings to reach the display options".into(),
            operation: Operation::open_app("Settings"),
            description: String::new(),
        },
        OperationRecord {
            thought: "Tap Display to find dark mode".into(),
            operation: Operation::tap(540, 370),
            description: String::new(),
        },
    ]
}

pub fn settings_perception(keyboard: bool) -> PerceptionResult {
    PerceptionResult::new(
        vec![
            el(ElementKind::Text, "Settings", [60, 120, 700, 240]),
            el(ElementKind::Icon, "Search", [780, 120, 1020, 240]),
            el(ElementKind::Text, "Display", [60, 300, 1020, 440]),
        ],
        keyboard,
    )
}

pub fn display_perception() -> PerceptionResult {
    PerceptionResult::new(
        vec![
            el(ElementKind::Text, "Display", [300, 120, 1020, 240]),
            el(ElementKind::Text, "Dark mode", [60, 300, 800, 440]),
            el(ElementKind::Icon, "Dark mode switch", [840, 300, 1020, 440]),
        ],
        false,
    )
}

pub fn instruction() -> Instruction {
    Instruction::new("Turn on dark mode").unwrap()
}

pub fn progress() -> TaskProgress {
    TaskProgress("Opened the Settings app.".into())
}


/// Renders every prompt a task's first steps would produce.
pub fn all_prompts(t: &TemplateSet, ins: &Instruction) -> Vec<String> {
    let h = history();
    let s = screen("s");
    let perc = settings_perception(false);
    let prog = progress();
    let mem = MemoryUnit::new();
    let mut out = Vec::new();
    for p in [
        t.render_planning_prompt(ins, &h[..1], &prog, &mem).unwrap(),
        t.render_planning_prompt(ins, &h, &prog, &mem).unwrap(),
        t.render_decision_prompt(&DecisionInputs {
            instruction: ins,
            progress: &prog,
            memory: &mem,
            last_reflection: None,
            screen: &s,
            perception: &perc,
            history: &h,
            fault: None,
        })
        .unwrap(),
        t.render_reflection_prompt(ins, &mem, &h[1], (&s, &perc), (&s, &display_perception()))
            .unwrap(),
    ] {
        out.push(p.system);
        out.push(p.user);
    }
    out
}

/// The four golden comparisons: (name, rendered, expected). Also checks
/// image counts and order.
pub fn golden_checks() -> Vec<(String, String, String)> {
    let t = TemplateSet::builtin(Locale::En);
    let ins = instruction();
    let h = history();
    let mem = MemoryUnit::new();
    let prog = progress();
    let mut out = Vec::new();
    let mut push = |name: &str, p: &PromptBundle, user_file: &str| {
        out.push((format!("{name}.system"), p.system.clone(), golden(&format!("{name}.system.txt"))));
        out.push((format!("{name}.user"), p.user.clone(), golden(user_file)));
    };
    let p = t.render_planning_prompt(&ins, &h[..1], &TaskProgress::default(), &mem).unwrap();
    push("planning_first", &p, "planning_first.user.txt");
    let p = t.render_planning_prompt(&ins, &h, &prog, &mem).unwrap();
    push("planning", &p, "planning.user.txt");
    let s = screen("settings");
    let perc = settings_perception(false);
    let p = t
        .render_decision_prompt(&DecisionInputs {
            instruction: &ins,
            progress: &prog,
            memory: &mem,
            last_reflection: None,
            screen: &s,
            perception: &perc,
            history: &h[..1],
            fault: None,
        })
        .unwrap();
    push("decision", &p, "decision.user.txt");
    let (before, after) = (screen("before"), screen("after"));
    let p = t
        .render_reflection_prompt(&ins, &mem, &h[1], (&before, &perc), (&after, &display_perception()))
        .unwrap();
    push("reflection", &p, "reflection.user.txt");
    out
}

/// Image ids attached to the decision and reflection prompts.
pub fn image_ids() -> (Vec<String>, Vec<String>) {
    let t = TemplateSet::builtin(Locale::En);
    let ins = instruction();
    let h = history();
    let mem = MemoryUnit::new();
    let prog = progress();
    let s = screen("settings");
    let perc = settings_perception(false);
    let d = t
        .render_decision_prompt(&DecisionInputs {
            instruction: &ins,
            progress: &prog,
            memory: &mem,
            last_reflection: None,
            screen: &s,
            perception: &perc,
            history: &h,
            fault: None,
        })
        .unwrap();
    let (before, after) = (screen("before"), screen("after"));
    let r = t
        .render_reflection_prompt(&ins, &mem, &h[1], (&before, &perc), (&after, &display_perception()))
        .unwrap();
    let ids = |b: &PromptBundle| b.images.iter().map(|s| s.state_id().to_string()).collect();
    (ids(&d), ids(&r))
}
