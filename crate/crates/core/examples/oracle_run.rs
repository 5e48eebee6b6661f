//! Runs one demo task with the scripted oracle and prints each iteration.

use mobile_operator::eval::{run_sim_task, EvalOptions, Suite, SuiteDevice};

fn main() {
    let suite = Suite::demo();
    let SuiteDevice::Sim(spec) = &suite.device else { unreachable!() };
    let task = suite.task("weather-to-notes").unwrap();
    let run = run_sim_task(spec, task, &EvalOptions::default()).unwrap();
    println!("task: {}", task.instruction);
    for it in &run.trace.iterations {
        let op = it.record.as_ref().map(|r| r.operation.to_string()).unwrap_or_default();
        println!("[{}] {op:40} {:?}", it.index, it.verdict());
    }
    println!("terminal: {:?}  success: {}", run.trace.terminal, task.check(&run.final_state));
}
