//! Parses the six operation forms and shows how malformed input is rejected.

use mobile_operator::opspace::{parse_operation, render_operation};

fn main() {
    for raw in [
        "Open app (Notes)",
        "tap (540, 1200)",
        "Swipe (540, 2000), (540, 800)",
        "Type (Buy milk)",
        "Home",
        "stop",
        "Tap (1, 2, 3)",
        "Jump",
    ] {
        match parse_operation(raw) {
            Ok(op) => println!("{raw:32} -> {}", render_operation(&op)),
            Err(e) => println!("{raw:32} -> error: {e}"),
        }
    }
}
