//! The device contract shared by the simulator and the ADB adapter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Operation, ScreenState, StateId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub changed: bool,
    /// State after execution when the backend can tell cheaply (simulator).
    pub state_id: Option<StateId>,
    pub note: Option<String>,
    /// Bridge commands issued, verbatim.
    #[serde(default)]
    pub commands: Vec<String>,
}

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("device unreachable: {0}")]
    DeviceUnreachable(String),
    #[error("screen capture failed: {0}")]
    CaptureFailed(String),
    #[error("command failed (exit {exit_code:?}): {stderr}")]
    CommandFailed { exit_code: Option<i32>, stderr: String },
    #[error("no launch target for app {0:?}")]
    NoLaunchTarget(String),
    #[error("nothing to revert")]
    NothingToRevert,
    #[error("unknown state {0}")]
    UnknownState(StateId),
}

/// How a device undoes an erroneous operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RollbackMechanism {
    Snapshot,
    BackKey,
}

pub trait Device: Send {
    fn screenshot(&mut self) -> Result<ScreenState, DeviceError>;

    fn execute(&mut self, op: &Operation) -> Result<ExecutionReport, DeviceError>;

    /// Undoes the most recent operation and returns the resulting state id.
    fn revert_one(&mut self) -> Result<StateId, DeviceError>;

    fn at_home(&mut self) -> Result<bool, DeviceError>;

    /// Keyboard status from the device itself, when it can report one.
    fn keyboard_active(&mut self) -> Result<Option<bool>, DeviceError> {
        Ok(None)
    }

    /// The state `execute(op)` would produce, without executing it.
    /// Only simulated devices can answer.
    fn expected_effect(&mut self, _op: &Operation) -> Result<Option<StateId>, DeviceError> {
        Ok(None)
    }

    fn rollback_mechanism(&self) -> RollbackMechanism;
}

impl<D: Device + ?Sized> Device for Box<D> {
    fn screenshot(&mut self) -> Result<ScreenState, DeviceError> {
        (**self).screenshot()
    }
    fn execute(&mut self, op: &Operation) -> Result<ExecutionReport, DeviceError> {
        (**self).execute(op)
    }
    fn revert_one(&mut self) -> Result<StateId, DeviceError> {
        (**self).revert_one()
    }
    fn at_home(&mut self) -> Result<bool, DeviceError> {
        (**self).at_home()
    }
    fn keyboard_active(&mut self) -> Result<Option<bool>, DeviceError> {
        (**self).keyboard_active()
    }
    fn expected_effect(&mut self, op: &Operation) -> Result<Option<StateId>, DeviceError> {
        (**self).expected_effect(op)
    }
    fn rollback_mechanism(&self) -> RollbackMechanism {
        (**self).rollback_mechanism()
    }
}
