//! Evaluates the demo suite and writes the report and traces to a directory.

use mobile_operator::eval::{run_suite, EvalOptions, Suite};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/eval-demo".into());
    let suite = Suite::demo();
    let run = run_suite(
        &suite,
        &EvalOptions {
            parallel: 4,
            ..EvalOptions::default()
        },
    )
    .unwrap();
    run.write(&suite, std::path::Path::new(&out)).unwrap();
    println!("{}", run.report.render_table());
    println!("wrote {out}/report.json and {} traces", run.traces.len());
}
