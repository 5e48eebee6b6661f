//! Rendered prompts against hand-transcribed goldens, image counts, and the
//! knowledge-injection byte diff.

mod common;

use common::prompts::*;
use mobile_operator::eval::{task_instruction, Suite};
use mobile_operator::orchestrator::RunConfig;
use mobile_operator::prompting::{DecisionInputs, TemplateSet};
use mobile_operator::{Locale, MemoryUnit, TaskProgress};

#[test]
fn planning_first_matches_golden() {
    let t = TemplateSet::builtin(Locale::En);
    let p = t
        .render_planning_prompt(&instruction(), &history()[..1], &TaskProgress::default(), &MemoryUnit::new())
        .unwrap();
    assert_eq!(p.system, golden("planning_first.system.txt"));
    assert_eq!(p.user, golden("planning_first.user.txt"));
    assert!(p.images.is_empty());
}

#[test]
fn planning_matches_golden() {
    let t = TemplateSet::builtin(Locale::En);
    let p = t
        .render_planning_prompt(&instruction(), &history(), &progress(), &MemoryUnit::new())
        .unwrap();
    assert_eq!(p.system, golden("planning.system.txt"));
    assert_eq!(p.user, golden("planning.user.txt"));
    assert!(p.images.is_empty());
}

#[test]
fn planning_needs_history() {
    let t = TemplateSet::builtin(Locale::En);
    assert!(t
        .render_planning_prompt(&instruction(), &[], &progress(), &MemoryUnit::new())
        .is_err());
}

#[test]
fn decision_matches_golden_with_one_image() {
    let t = TemplateSet::builtin(Locale::En);
    let ins = instruction();
    let h = history();
    let s = screen("settings");
    let perc = settings_perception(false);
    let prog = progress();
    let mem = MemoryUnit::new();
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
    assert_eq!(p.system, golden("decision.system.txt"));
    assert_eq!(p.user, golden("decision.user.txt"));
    assert_eq!(p.images.len(), 1);
    assert_eq!(p.images[0].state_id().as_str(), "settings");
}

#[test]
fn decision_first_step_with_keyboard_matches_golden() {
    let t = TemplateSet::builtin(Locale::En);
    let ins = instruction();
    let s = screen("settings");
    let perc = settings_perception(true);
    let prog = TaskProgress::default();
    let mem = MemoryUnit::new();
    let p = t
        .render_decision_prompt(&DecisionInputs {
            instruction: &ins,
            progress: &prog,
            memory: &mem,
            last_reflection: None,
            screen: &s,
            perception: &perc,
            history: &[],
            fault: None,
        })
        .unwrap();
    assert_eq!(p.user, golden("decision_keyboard_first_step.user.txt"));
    assert_eq!(p.images.len(), 1);
}

#[test]
fn reflection_matches_golden_with_two_images_in_order() {
    let t = TemplateSet::builtin(Locale::En);
    let before = screen("before");
    let after = screen("after");
    let p = t
        .render_reflection_prompt(
            &instruction(),
            &MemoryUnit::new(),
            &history()[1],
            (&before, &settings_perception(false)),
            (&after, &display_perception()),
        )
        .unwrap();
    assert_eq!(p.system, golden("reflection.system.txt"));
    assert_eq!(p.user, golden("reflection.user.txt"));
    let ids: Vec<&str> = p.images.iter().map(|s| s.state_id().as_str()).collect();
    assert_eq!(ids, ["before", "after"]);
}

#[test]
fn chinese_templates_render() {
    let t = TemplateSet::builtin(Locale::Zh);
    let p = t
        .render_planning_prompt(&instruction(), &history(), &progress(), &MemoryUnit::new())
        .unwrap();
    assert!(p.user.contains("Turn on dark mode"));
    assert!(p.user.contains("Completed contents"));
}

#[test]
fn knowledge_injection_changes_only_hinted_tasks() {
    let suite = Suite::knowledge_demo();
    let t = TemplateSet::builtin(Locale::En);
    let off = RunConfig::default();
    let on = RunConfig {
        knowledge_injection: true,
        ..RunConfig::default()
    };
    for task in &suite.tasks {
        let plain = all_prompts(&t, &task_instruction(task, &off).unwrap());
        let hinted = all_prompts(&t, &task_instruction(task, &on).unwrap());
        if task.knowledge.is_empty() {
            assert_eq!(plain, hinted, "{}", task.id);
        } else {
            assert_ne!(plain, hinted, "{}", task.id);
            for (a, b) in plain.iter().zip(&hinted) {
                if a != b {
                    assert!(b.contains(&task.knowledge[0]), "{}", task.id);
                }
            }
        }
    }
}
