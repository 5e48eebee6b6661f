//! Walks the demo device: lists tap targets, executes a few operations and
//! reverts the last one.

use std::sync::Arc;

use mobile_operator::sim::{DeviceSpec, Simulator};
use mobile_operator::Operation;

fn main() {
    let mut sim = Simulator::new(Arc::new(DeviceSpec::demo()));
    println!("start: {}", sim.state_id());
    for (label, op) in sim.tap_targets().iter().take(5) {
        println!("  target {label:20} {op}");
    }
    for op in [Operation::open_app("Settings"), Operation::swipe(540, 2000, 540, 800)] {
        let report = sim.execute(&op);
        let to = report.state_id.map(|s| s.to_string()).unwrap_or_else(|| "unchanged".into());
        println!("{op}: changed={} -> {to}", report.changed);
    }
    let shot = sim.screenshot();
    println!("screenshot {}x{} ({} bytes of PNG)", shot.width(), shot.height(), shot.image().len());
    let back = sim.revert_one().expect("a snapshot to revert to");
    println!("reverted to {back}, snapshots left {}", sim.snapshot_depth());
}
