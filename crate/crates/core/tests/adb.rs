//! ADB adapter against a fake command runner.

use std::collections::BTreeMap;
use std::io;
use std::sync::Arc;
use std::time::Duration;

use mobile_operator::adb::{escape_input_text, AdbDevice, CommandOutput, CommandRunner};
use mobile_operator::device::{Device, DeviceError, RollbackMechanism};
use mobile_operator::perception::{Perceiver, PerceptionError};
use mobile_operator::{BBox, ElementKind, Operation, PerceptionElement, PerceptionResult, ScreenState};
use proptest::prelude::*;

type Responder = Box<dyn FnMut(&[String]) -> io::Result<CommandOutput> + Send>;

/// Records every invocation and answers through `respond`.
struct FakeRunner {
    calls: Vec<Vec<String>>,
    respond: Responder,
}

impl FakeRunner {
    fn new(respond: impl FnMut(&[String]) -> io::Result<CommandOutput> + Send + 'static) -> Self {
        FakeRunner {
            calls: Vec::new(),
            respond: Box::new(respond),
        }
    }

    fn lines(&self) -> Vec<String> {
        self.calls.iter().map(|c| c.join(" ")).collect()
    }
}

impl CommandRunner for FakeRunner {
    fn run(&mut self, args: &[String]) -> io::Result<CommandOutput> {
        self.calls.push(args.to_vec());
        (self.respond)(args)
    }
}

fn ok(stdout: &[u8]) -> io::Result<CommandOutput> {
    Ok(CommandOutput {
        status: Some(0),
        stdout: stdout.to_vec(),
        stderr: Vec::new(),
    })
}

/// Smallest byte string `png_dimensions` accepts.
fn png(w: u32, h: u32, salt: u8) -> Vec<u8> {
    let mut v = b"\x89PNG\r\n\x1a\n\0\0\0\x0dIHDR".to_vec();
    v.extend(w.to_be_bytes());
    v.extend(h.to_be_bytes());
    v.push(salt);
    v
}

fn device(runner: FakeRunner) -> AdbDevice<FakeRunner> {
    AdbDevice::new(runner, "emu-1").with_settle(Duration::ZERO)
}

#[test]
fn operations_map_to_input_commands() {
    let mut dev = device(FakeRunner::new(|_| ok(b"")));
    for op in [
        Operation::tap(10, 20),
        Operation::swipe(1, 2, 3, 4),
        Operation::type_text("hi there"),
        Operation::Home,
    ] {
        let report = dev.execute(&op).unwrap();
        assert!(report.changed);
        assert_eq!(report.commands.len(), 1);
    }
    assert!(!dev.execute(&Operation::Stop).unwrap().changed);
    assert_eq!(
        dev.runner().lines(),
        [
            "-s emu-1 shell input tap 10 20",
            "-s emu-1 shell input swipe 1 2 3 4 500",
            "-s emu-1 shell input text hi%sthere",
            "-s emu-1 shell input keyevent KEYCODE_HOME",
        ]
    );
    assert_eq!(dev.rollback_mechanism(), RollbackMechanism::BackKey);
}

#[test]
fn open_app_uses_the_mapping() {
    let apps = BTreeMap::from([
        ("Settings".to_string(), "com.android.settings/.Settings".to_string()),
        ("Notes".to_string(), "com.example.notes".to_string()),
    ]);
    let mut dev = device(FakeRunner::new(|_| ok(b""))).with_apps(apps);
    dev.execute(&Operation::open_app("Settings")).unwrap();
    dev.execute(&Operation::open_app("Notes")).unwrap();
    assert_eq!(
        dev.runner().lines(),
        [
            "-s emu-1 shell am start -n com.android.settings/.Settings",
            "-s emu-1 shell monkey -p com.example.notes -c android.intent.category.LAUNCHER 1",
        ]
    );
    assert!(matches!(
        dev.execute(&Operation::open_app("Unknown")),
        Err(DeviceError::NoLaunchTarget(_))
    ));
}

struct Labels;

impl Perceiver for Labels {
    fn perceive(&self, _: &ScreenState) -> Result<PerceptionResult, PerceptionError> {
        Ok(PerceptionResult::new(
            vec![PerceptionElement::new(ElementKind::Text, "Maps", BBox::new(100, 200, 300, 400))],
            false,
        ))
    }
}

#[test]
fn unmapped_apps_are_tapped_by_label() {
    let mut dev = device(FakeRunner::new(|args| {
        if args.iter().any(|a| a == "screencap") {
            ok(&png(1080, 2340, 0))
        } else {
            ok(b"")
        }
    }))
    .with_label_perception(Arc::new(Labels));
    dev.execute(&Operation::open_app("maps")).unwrap();
    assert_eq!(
        dev.runner().lines(),
        ["-s emu-1 exec-out screencap -p", "-s emu-1 shell input tap 200 300"]
    );
    assert!(matches!(
        dev.execute(&Operation::open_app("Camera")),
        Err(DeviceError::NoLaunchTarget(_))
    ));
}

#[test]
fn screenshots_are_content_addressed() {
    let mut salt = 0u8;
    let mut dev = device(FakeRunner::new(move |_| {
        salt = salt.wrapping_add(1);
        ok(&png(720, 1280, salt / 2))
    }));
    let a = dev.screenshot().unwrap();
    let b = dev.screenshot().unwrap();
    let c = dev.screenshot().unwrap();
    assert_eq!((a.width(), a.height()), (720, 1280));
    assert_ne!(a.state_id(), b.state_id());
    assert_eq!(b.state_id(), c.state_id());
    assert!(a.state_id().as_str().starts_with("sha256:"));
}

#[test]
fn non_png_capture_fails() {
    let mut dev = device(FakeRunner::new(|_| ok(b"garbage")));
    assert!(matches!(dev.screenshot(), Err(DeviceError::CaptureFailed(_))));
}

#[test]
fn revert_presses_back_and_recaptures() {
    let mut dev = device(FakeRunner::new(|args| {
        if args.iter().any(|a| a == "screencap") {
            ok(&png(4, 4, 9))
        } else {
            ok(b"")
        }
    }));
    let id = dev.revert_one().unwrap();
    assert!(id.as_str().starts_with("sha256:"));
    assert_eq!(
        dev.runner().lines(),
        ["-s emu-1 shell input keyevent KEYCODE_BACK", "-s emu-1 exec-out screencap -p"]
    );
}

#[test]
fn home_and_keyboard_probes() {
    let mut dev = device(FakeRunner::new(|args| {
        if args.iter().any(|a| a == "window") {
            ok(b"  mCurrentFocus=Window{1 u0 com.google.android.apps.nexuslauncher/.NexusLauncherActivity}\n")
        } else {
            ok(b"  mInputShown=true mShowRequested=true\n")
        }
    }));
    assert!(dev.at_home().unwrap());
    assert_eq!(dev.keyboard_active().unwrap(), Some(true));

    let mut dev = device(FakeRunner::new(|args| {
        if args.iter().any(|a| a == "window") {
            ok(b"  mCurrentFocus=Window{1 u0 com.android.settings/.Settings}\n")
        } else {
            ok(b"nothing relevant\n")
        }
    }));
    assert!(!dev.at_home().unwrap());
    assert_eq!(dev.keyboard_active().unwrap(), None);
}

#[test]
fn failures_are_classified() {
    let mut dev = device(FakeRunner::new(|_| {
        Ok(CommandOutput {
            status: Some(1),
            stdout: Vec::new(),
            stderr: b"error: device 'emu-1' not found".to_vec(),
        })
    }));
    assert!(matches!(dev.execute(&Operation::Home), Err(DeviceError::DeviceUnreachable(_))));

    let mut dev = device(FakeRunner::new(|_| {
        Ok(CommandOutput {
            status: Some(255),
            stdout: Vec::new(),
            stderr: b"java.lang.SecurityException".to_vec(),
        })
    }));
    assert!(matches!(
        dev.execute(&Operation::Home),
        Err(DeviceError::CommandFailed { exit_code: Some(255), .. })
    ));

    let mut dev = device(FakeRunner::new(|_| Err(io::Error::new(io::ErrorKind::NotFound, "no adb"))));
    assert!(matches!(dev.screenshot(), Err(DeviceError::DeviceUnreachable(_))));
}

#[test]
fn control_characters_cannot_be_typed() {
    let mut dev = device(FakeRunner::new(|_| ok(b"")));
    assert!(dev.execute(&Operation::type_text("a\tb")).is_err());
    assert!(dev.runner().calls.is_empty());
}

/// Reverses `escape_input_text`; exists only to show the escaping loses nothing.
fn unescape(s: &str) -> String {
    let mut out = String::new();
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => out.push(chars.next().unwrap()),
            '%' => {
                assert_eq!(chars.next(), Some('s'));
                out.push(' ');
            }
            c => out.push(c),
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn escaping_is_injective(text in "[^\\p{Cc}]{0,40}") {
        let escaped = escape_input_text(&text).unwrap();
        prop_assert!(!escaped.contains(' '));
        prop_assert_eq!(unescape(&escaped), text);
    }

    #[test]
    fn distinct_texts_escape_differently(a in "[ a%s\\\\&;'\"]{0,8}", b in "[ a%s\\\\&;'\"]{0,8}") {
        if a != b {
            prop_assert_ne!(escape_input_text(&a).unwrap(), escape_input_text(&b).unwrap());
        }
    }
}
