//! Compares the demo suite with and without the memory unit.

use mobile_operator::eval::{run_suite, EvalOptions, Suite};
use mobile_operator::orchestrator::RunConfig;

fn main() {
    let suite = Suite::demo();
    for memory_enabled in [true, false] {
        let opts = EvalOptions {
            config: RunConfig {
                memory_enabled,
                ..RunConfig::default()
            },
            ..EvalOptions::default()
        };
        let report = run_suite(&suite, &opts).unwrap().report;
        println!("memory {}:", if memory_enabled { "on" } else { "off" });
        for row in report.per_task.iter().filter(|r| !r.success) {
            println!("  failed {}", row.id);
        }
        println!("{}", report.render_table());
    }
}
