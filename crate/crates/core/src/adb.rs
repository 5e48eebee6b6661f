//! Real-device adapter over the Android Debug Bridge.
//!
//! Commands issued (after `adb -s SERIAL`):
//!
//! ```text
//! screenshot   exec-out screencap -p
//! Tap          shell input tap X Y
//! Swipe        shell input swipe X1 Y1 X2 Y2 500
//! Type         shell input text ESCAPED
//! Home         shell input keyevent KEYCODE_HOME
//! revert       shell input keyevent KEYCODE_BACK
//! OpenApp      shell am start -n PKG/ACTIVITY
//!              shell monkey -p PKG -c android.intent.category.LAUNCHER 1
//! keyboard     shell dumpsys input_method      (mInputShown=)
//! home check   shell dumpsys window            (mCurrentFocus=)
//! ```

use std::collections::BTreeMap;
use std::io;
use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::device::{Device, DeviceError, ExecutionReport, RollbackMechanism};
use crate::perception::{png_dimensions, Perceiver};
use crate::types::{Operation, ScreenState, StateId};

pub const ENV_ADB_SERIAL: &str = "AGENT_ADB_SERIAL";
pub const SWIPE_DURATION_MS: u32 = 500;
pub const DEFAULT_SETTLE: Duration = Duration::from_millis(1500);

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CommandOutput {
    pub status: Option<i32>,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
}

impl CommandOutput {
    pub fn success(&self) -> bool {
        self.status == Some(0)
    }
}

/// Runs one bridge invocation. Swapped for a fake in tests.
pub trait CommandRunner: Send {
    fn run(&mut self, args: &[String]) -> io::Result<CommandOutput>;
}

/// Spawns the `adb` executable.
#[derive(Debug, Clone)]
pub struct ProcessRunner {
    pub program: PathBuf,
}

impl Default for ProcessRunner {
    fn default() -> Self {
        ProcessRunner {
            program: PathBuf::from("adb"),
        }
    }
}

impl CommandRunner for ProcessRunner {
    fn run(&mut self, args: &[String]) -> io::Result<CommandOutput> {
        let out = Command::new(&self.program).args(args).output()?;
        Ok(CommandOutput {
            status: out.status.code(),
            stdout: out.stdout,
            stderr: out.stderr,
        })
    }
}

/// Escapes text for `input text`: space becomes `%s`, shell
/// metacharacters and `%` get a backslash. Control characters cannot be
/// typed this way and are rejected.
pub fn escape_input_text(text: &str) -> Result<String, DeviceError> {
    let mut out = String::with_capacity(text.len() * 2);
    for c in text.chars() {
        match c {
            ' ' => out.push_str("%s"),
            '\\' | '\'' | '"' | '`' | '$' | '&' | '|' | ';' | '<' | '>' | '(' | ')' | '*' | '?'
            | '!' | '#' | '~' | '[' | ']' | '{' | '}' | '^' | '%' | '=' => {
                out.push('\\');
                out.push(c);
            }
            c if c.is_control() => {
                return Err(DeviceError::CommandFailed {
                    exit_code: None,
                    stderr: format!("cannot type control character {c:?}"),
                })
            }
            c => out.push(c),
        }
    }
    Ok(out)
}

pub struct AdbDevice<R: CommandRunner = ProcessRunner> {
    runner: R,
    serial: String,
    apps: BTreeMap<String, String>,
    settle: Duration,
    labels: Option<Arc<dyn Perceiver>>,
}

impl AdbDevice<ProcessRunner> {
    /// Uses `serial`, or `AGENT_ADB_SERIAL` when `None`.
    pub fn connect(serial: Option<String>) -> Result<Self, DeviceError> {
        let serial = serial
            .or_else(|| std::env::var(ENV_ADB_SERIAL).ok())
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| DeviceError::DeviceUnreachable(format!("no serial given and {ENV_ADB_SERIAL} is not set")))?;
        Ok(AdbDevice::new(ProcessRunner::default(), serial))
    }
}

impl<R: CommandRunner> AdbDevice<R> {
    pub fn new(runner: R, serial: impl Into<String>) -> Self {
        AdbDevice {
            runner,
            serial: serial.into(),
            apps: BTreeMap::new(),
            settle: DEFAULT_SETTLE,
            labels: None,
        }
    }

    /// App name to `package` or `package/activity`.
    pub fn with_apps(mut self, apps: BTreeMap<String, String>) -> Self {
        self.apps = apps;
        self
    }

    pub fn with_settle(mut self, settle: Duration) -> Self {
        self.settle = settle;
        self
    }

    /// Perception used to find a home-screen label for unmapped apps.
    pub fn with_label_perception(mut self, p: Arc<dyn Perceiver>) -> Self {
        self.labels = Some(p);
        self
    }

    pub fn runner(&self) -> &R {
        &self.runner
    }

    fn args(&self, rest: &[&str]) -> Vec<String> {
        let mut v = vec!["-s".to_string(), self.serial.clone()];
        v.extend(rest.iter().map(|s| s.to_string()));
        v
    }

    fn run(&mut self, rest: &[&str]) -> Result<(String, CommandOutput), DeviceError> {
        let args = self.args(rest);
        let line = std::iter::once("adb".to_string())
            .chain(args.iter().cloned())
            .collect::<Vec<_>>()
            .join(" ");
        tracing::debug!(command = %line, "adb");
        let out = self
            .runner
            .run(&args)
            .map_err(|e| DeviceError::DeviceUnreachable(format!("cannot run adb: {e}")))?;
        if out.success() {
            return Ok((line, out));
        }
        let stderr = String::from_utf8_lossy(&out.stderr).trim().to_string();
        let lower = stderr.to_lowercase();
        if lower.contains("not found") && lower.contains("device")
            || lower.contains("no devices")
            || lower.contains("offline")
            || lower.contains("unauthorized")
        {
            return Err(DeviceError::DeviceUnreachable(stderr));
        }
        Err(DeviceError::CommandFailed {
            exit_code: out.status,
            stderr,
        })
    }

    fn settle(&self) {
        if !self.settle.is_zero() {
            std::thread::sleep(self.settle);
        }
    }

    fn open_app(&mut self, name: &str) -> Result<String, DeviceError> {
        if let Some(target) = self.apps.get(name).cloned() {
            let (line, _) = if target.contains('/') {
                self.run(&["shell", "am", "start", "-n", &target])?
            } else {
                self.run(&[
                    "shell",
                    "monkey",
                    "-p",
                    &target,
                    "-c",
                    "android.intent.category.LAUNCHER",
                    "1",
                ])?
            };
            return Ok(line);
        }
        let Some(labels) = self.labels.clone() else {
            return Err(DeviceError::NoLaunchTarget(name.to_string()));
        };
        let screen = self.screenshot()?;
        let found = labels
            .perceive(&screen)
            .map_err(|e| DeviceError::CaptureFailed(e.to_string()))?
            .elements
            .into_iter()
            .find(|e| e.content.trim().eq_ignore_ascii_case(name.trim()));
        match found {
            Some(e) => {
                let (x, y) = (e.center.0.to_string(), e.center.1.to_string());
                Ok(self.run(&["shell", "input", "tap", &x, &y])?.0)
            }
            None => Err(DeviceError::NoLaunchTarget(name.to_string())),
        }
    }
}

impl<R: CommandRunner> Device for AdbDevice<R> {
    fn screenshot(&mut self) -> Result<ScreenState, DeviceError> {
        let (_, out) = self.run(&["exec-out", "screencap", "-p"])?;
        let (w, h) = png_dimensions(&out.stdout)
            .ok_or_else(|| DeviceError::CaptureFailed("screencap did not return a PNG".into()))?;
        let id = StateId(format!("sha256:{}", hex::encode(Sha256::digest(&out.stdout))));
        ScreenState::new(out.stdout, w, h, id).map_err(|e| DeviceError::CaptureFailed(e.to_string()))
    }

    fn execute(&mut self, op: &Operation) -> Result<ExecutionReport, DeviceError> {
        let line = match op {
            Operation::OpenApp { name } => Some(self.open_app(name)?),
            Operation::Tap { x, y } => {
                Some(self.run(&["shell", "input", "tap", &x.to_string(), &y.to_string()])?.0)
            }
            Operation::Swipe { x1, y1, x2, y2 } => Some(
                self.run(&[
                    "shell",
                    "input",
                    "swipe",
                    &x1.to_string(),
                    &y1.to_string(),
                    &x2.to_string(),
                    &y2.to_string(),
                    &SWIPE_DURATION_MS.to_string(),
                ])?
                .0,
            ),
            Operation::Type { text } => {
                let escaped = escape_input_text(text)?;
                Some(self.run(&["shell", "input", "text", &escaped])?.0)
            }
            Operation::Home => Some(self.run(&["shell", "input", "keyevent", "KEYCODE_HOME"])?.0),
            Operation::Stop => None,
        };
        if line.is_some() {
            self.settle();
        }
        Ok(ExecutionReport {
            changed: line.is_some(),
            state_id: None,
            note: None,
            commands: line.into_iter().collect(),
        })
    }

    fn revert_one(&mut self) -> Result<StateId, DeviceError> {
        self.run(&["shell", "input", "keyevent", "KEYCODE_BACK"])?;
        self.settle();
        Ok(self.screenshot()?.state_id().clone())
    }

    fn at_home(&mut self) -> Result<bool, DeviceError> {
        let (_, out) = self.run(&["shell", "dumpsys", "window"])?;
        let text = String::from_utf8_lossy(&out.stdout);
        let focus = text
            .lines()
            .find(|l| l.contains("mCurrentFocus=") || l.contains("mFocusedApp="));
        // Unknown focus: do not block Open app.
        Ok(focus.is_none_or(|l| l.to_lowercase().contains("launcher")))
    }

    fn keyboard_active(&mut self) -> Result<Option<bool>, DeviceError> {
        let out = match self.run(&["shell", "dumpsys", "input_method"]) {
            Ok((_, out)) => out,
            Err(DeviceError::CommandFailed { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let text = String::from_utf8_lossy(&out.stdout);
        Ok(text.split_whitespace().find_map(|tok| {
            match tok.strip_prefix("mInputShown=")? {
                "true" => Some(true),
                "false" => Some(false),
                _ => None,
            }
        }))
    }

    fn rollback_mechanism(&self) -> RollbackMechanism {
        RollbackMechanism::BackKey
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escaping_rules() {
        assert_eq!(escape_input_text("hello world").unwrap(), "hello%sworld");
        assert_eq!(escape_input_text("50% off").unwrap(), "50\\%%soff");
        assert_eq!(escape_input_text("a&b;c").unwrap(), "a\\&b\\;c");
        assert!(escape_input_text("a\nb").is_err());
    }
}
