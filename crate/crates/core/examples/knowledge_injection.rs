//! Runs the knowledge suite with and without operation hints.

use mobile_operator::eval::{run_suite, task_instruction, EvalOptions, Suite};
use mobile_operator::orchestrator::RunConfig;

fn main() {
    let suite = Suite::knowledge_demo();
    for knowledge_injection in [false, true] {
        let config = RunConfig {
            knowledge_injection,
            ..RunConfig::default()
        };
        println!("hints {}:", if knowledge_injection { "on" } else { "off" });
        for task in suite.tasks.iter().filter(|t| !t.knowledge.is_empty()) {
            let ins = task_instruction(task, &config).unwrap();
            println!("  {} hints: {:?}", task.id, ins.hints());
        }
        let report = run_suite(
            &suite,
            &EvalOptions {
                config,
                ..EvalOptions::default()
            },
        )
        .unwrap()
        .report;
        for row in &report.per_task {
            println!("  {:20} success {}", row.id, row.success);
        }
    }
}
