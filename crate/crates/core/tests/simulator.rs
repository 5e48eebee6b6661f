//! Simulator determinism, rollback and effect prediction.

use std::sync::Arc;

use mobile_operator::device::Device;
use mobile_operator::eval::Suite;
use mobile_operator::sim::{DeviceSpec, SimHandle, Simulator};
use mobile_operator::Operation;
use proptest::prelude::*;

fn spec() -> Arc<DeviceSpec> {
    Arc::new(DeviceSpec::demo())
}

/// Ops worth trying from the current state: every tap target, plus a few
/// generic ones.
fn candidates(sim: &Simulator) -> Vec<Operation> {
    let mut ops: Vec<Operation> = sim.tap_targets().into_iter().map(|(_, op)| op).collect();
    ops.push(Operation::Home);
    ops.push(Operation::swipe(540, 2000, 540, 800));
    if sim.state().keyboard {
        ops.push(Operation::type_text("abc"));
    }
    if sim.at_home() {
        for app in sim.spec().apps.keys() {
            ops.push(Operation::open_app(app.clone()));
        }
    }
    ops
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_walks_are_deterministic_and_revertible(choices in prop::collection::vec(any::<prop::sample::Index>(), 1..20)) {
        let mut a = Simulator::new(spec());
        let mut b = Simulator::new(spec());
        let mut ids = vec![a.state_id()];
        for c in &choices {
            let ops = candidates(&a);
            let op = c.get(&ops).clone();
            let predicted = a.expected_effect(&op);
            a.execute(&op);
            b.execute(&op);
            prop_assert_eq!(a.state_id(), predicted);
            prop_assert_eq!(a.state_id(), b.state_id());
            ids.push(a.state_id());
        }
        prop_assert_eq!(a.screenshot(), b.screenshot());
        // Unwind as far as the snapshot stack allows.
        let depth = a.snapshot_depth();
        for k in 0..depth {
            let back = a.revert_one().unwrap();
            prop_assert_eq!(&back, &ids[ids.len() - 2 - k]);
        }
    }
}

#[test]
fn revert_restores_state_and_screenshot() {
    let mut sim = Simulator::new(spec());
    let before = sim.state().clone();
    let shot = sim.screenshot();
    sim.execute(&Operation::open_app("Settings"));
    assert_ne!(sim.state(), &before);
    sim.revert_one().unwrap();
    assert_eq!(sim.state(), &before);
    assert_eq!(sim.screenshot(), shot);
    assert!(sim.revert_one().is_err());
}

#[test]
fn blank_tap_is_ineffective() {
    let mut sim = Simulator::new(spec());
    sim.execute(&Operation::open_app("Settings"));
    let (x, y) = sim.blank_point().expect("settings has empty space");
    let before = sim.state_id();
    let report = sim.execute(&Operation::tap(x, y));
    assert!(!report.changed);
    assert_eq!(sim.state_id(), before);
}

#[test]
fn screenshots_are_quarter_scale_png() {
    let mut sim = Simulator::new(spec());
    let shot = sim.screenshot();
    let dims = mobile_operator::perception::png_dimensions(shot.image());
    assert_eq!(dims, Some((shot.width().div_ceil(4), shot.height().div_ceil(4))));
}

#[test]
fn ground_truth_perception_matches_tap_targets() {
    let mut sim = Simulator::new(spec());
    sim.execute(&Operation::open_app("Settings"));
    let shot = sim.screenshot();
    let perc = sim.ground_truth_perception(&shot).unwrap();
    for (label, op) in sim.tap_targets() {
        let Operation::Tap { x, y } = op else { unreachable!() };
        let (_, el) = perc.element_at(x, y).unwrap_or_else(|| panic!("{label} not perceived"));
        assert!(el.bbox.contains(x, y));
    }
}

#[test]
fn handle_implements_device() {
    let world = SimHandle::new(spec());
    let mut dev = world.clone();
    assert!(dev.at_home().unwrap());
    let shot = dev.screenshot().unwrap();
    let predicted = dev.expected_effect(&Operation::open_app("Notes")).unwrap();
    dev.execute(&Operation::open_app("Notes")).unwrap();
    assert_eq!(Some(world.lock().state_id()), predicted);
    assert!(!dev.at_home().unwrap());
    dev.revert_one().unwrap();
    assert_eq!(dev.screenshot().unwrap().state_id(), shot.state_id());
}

#[test]
fn every_ground_truth_step_is_predicted() {
    for task in &Suite::demo().tasks {
        let mut sim = Simulator::new(spec());
        for op in &task.ground_truth {
            let predicted = sim.expected_effect(op);
            sim.execute(op);
            assert_eq!(sim.state_id(), predicted, "{} {op}", task.id);
        }
        assert!(task.check(sim.state()), "{}", task.id);
    }
}

#[test]
fn spec_files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("device.toml");
    std::fs::write(&path, include_str!("../fixtures/demo_device.toml")).unwrap();
    let spec = DeviceSpec::from_path(&path).unwrap();
    assert_eq!(spec.width, DeviceSpec::demo().width);
    assert!(DeviceSpec::from_toml_str("width = 0").is_err());
}
