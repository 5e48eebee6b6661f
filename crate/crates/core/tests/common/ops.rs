//! Generators for operations.

use mobile_operator::Operation;
use proptest::prelude::*;

/// Non-empty text with balanced parentheses: runs of plain characters
/// (ASCII and CJK) nested inside `(...)` groups.
pub fn balanced_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        "[a-zA-Z0-9 ,.!?:;'\"#@/_-]{1,8}",
        "[\\u{4e00}-\\u{4e20}]{1,3}",
    ];
    leaf.prop_recursive(3, 16, 4, move |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a}{b}")),
            inner.prop_map(|a| format!("({a})")),
        ]
    })
}

pub fn app_name() -> impl Strategy<Value = String> {
    balanced_text().prop_filter_map("trimmed non-empty", |s| {
        let t = s.trim();
        (!t.is_empty()).then(|| t.to_string())
    })
}

pub fn operation() -> impl Strategy<Value = Operation> {
    prop_oneof![
        app_name().prop_map(Operation::open_app),
        (any::<u32>(), any::<u32>()).prop_map(|(x, y)| Operation::tap(x, y)),
        (any::<u32>(), any::<u32>(), any::<u32>(), any::<u32>())
            .prop_map(|(a, b, c, d)| Operation::swipe(a, b, c, d)),
        balanced_text().prop_map(Operation::type_text),
        Just(Operation::Home),
        Just(Operation::Stop),
    ]
}
