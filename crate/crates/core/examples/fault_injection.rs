//! Injects one erroneous and one ineffective operation per task and shows the
//! reflection agent recovering from both.

use mobile_operator::backends::FaultPlan;
use mobile_operator::eval::{run_suite, EvalOptions, Suite};
use mobile_operator::Verdict;

fn main() {
    let suite = Suite::demo();
    let opts = EvalOptions {
        faults: FaultPlan::one_of_each(),
        ..EvalOptions::default()
    };
    let run = run_suite(&suite, &opts).unwrap();
    for (task, trace) in suite.tasks.iter().zip(&run.traces) {
        let count = |v| trace.iterations.iter().filter(|i| i.verdict() == Some(v)).count();
        println!(
            "{:20} iterations {:2}  erroneous {}  ineffective {}  kept {}",
            task.id,
            trace.iterations.len(),
            count(Verdict::Erroneous),
            count(Verdict::Ineffective),
            trace.history.len()
        );
    }
    println!("{}", run.report.render_table());
}
