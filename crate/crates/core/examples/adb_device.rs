//! Shows the adb commands issued for each operation, using a runner that
//! prints instead of executing.

use std::collections::BTreeMap;
use std::io;

use mobile_operator::adb::{AdbDevice, CommandOutput, CommandRunner};
use mobile_operator::device::Device;
use mobile_operator::Operation;

struct DryRun;

impl CommandRunner for DryRun {
    fn run(&mut self, args: &[String]) -> io::Result<CommandOutput> {
        println!("adb {}", args.join(" "));
        Ok(CommandOutput {
            status: Some(0),
            stdout: Vec::new(),
            stderr: Vec::new(),
        })
    }
}

fn main() {
    let apps = BTreeMap::from([("Settings".to_string(), "com.android.settings".to_string())]);
    let mut dev = AdbDevice::new(DryRun, "emulator-5554")
        .with_settle(std::time::Duration::ZERO)
        .with_apps(apps);
    for op in [
        Operation::open_app("Settings"),
        Operation::tap(540, 1200),
        Operation::swipe(540, 2000, 540, 800),
        Operation::type_text("hello world"),
        Operation::Home,
    ] {
        println!("# {op}");
        if let Err(e) = dev.execute(&op) {
            println!("  failed: {e}");
        }
    }
}
