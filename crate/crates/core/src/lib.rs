//! Multi-agent operation of mobile user interfaces.
//!
//! A planning agent tracks task progress, a decision agent picks one
//! operation per step from perceived screens, a reflection agent judges the
//! outcome, and a memory unit keeps task-relevant content across screens.
//! The [`orchestrator`] runs the loop against any [`device::Device`]: the
//! deterministic [`sim`] simulator or a real phone through [`adb`].

pub mod adb;
pub mod agents;
pub mod cli;
pub mod backends;
pub mod device;
pub mod eval;
pub mod opspace;
pub mod orchestrator;
pub mod perception;
pub mod prompting;
pub mod retry;
pub mod sim;
pub mod trace;
pub mod types;

pub use types::*;
