//! Renders the planning, decision and reflection prompts for one step of
//! the demo device.

use std::sync::Arc;

use mobile_operator::prompting::{DecisionInputs, TemplateSet};
use mobile_operator::sim::{DeviceSpec, Simulator};
use mobile_operator::{Instruction, Locale, MemoryUnit, Operation, OperationRecord, TaskProgress};

fn main() {
    let t = TemplateSet::builtin(Locale::En);
    let ins = Instruction::new("Turn on dark mode").unwrap();
    let mut sim = Simulator::new(Arc::new(DeviceSpec::demo()));
    let before = sim.screenshot();
    let before_p = sim.ground_truth_perception(&before).unwrap();
    let mem = MemoryUnit::new();
    let progress = TaskProgress::default();

    let decision = t
        .render_decision_prompt(&DecisionInputs {
            instruction: &ins,
            progress: &progress,
            memory: &mem,
            last_reflection: None,
            screen: &before,
            perception: &before_p,
            history: &[],
            fault: None,
        })
        .unwrap();
    println!("=== decision system ===\n{}\n=== decision user ===\n{}", decision.system, decision.user);

    let record = OperationRecord {
        thought: "Settings holds the display options.".into(),
        operation: Operation::open_app("Settings"),
        description: "Open the Settings app.".into(),
    };
    sim.execute(&record.operation);
    let after = sim.screenshot();
    let after_p = sim.ground_truth_perception(&after).unwrap();
    let reflection = t
        .render_reflection_prompt(&ins, &mem, &record, (&before, &before_p), (&after, &after_p))
        .unwrap();
    println!("=== reflection user ({} images) ===\n{}", reflection.images.len(), reflection.user);

    let planning = t
        .render_planning_prompt(&ins, std::slice::from_ref(&record), &progress, &mem)
        .unwrap();
    println!("=== planning user ===\n{}", planning.user);
}
