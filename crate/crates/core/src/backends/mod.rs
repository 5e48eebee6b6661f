//! The model-invocation boundary.

mod oracle;
mod recording;
mod remote;
mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use oracle::{FaultKind, FaultPlan, HintGate, OraclePolicy, OracleScript, PlannedFault, RecallStep};
pub use recording::{Exchange, RecordingBackend};
pub use remote::{RemoteBackend, ENV_API_BASE, ENV_API_KEY};
pub use scripted::{ScriptedBackend, ScriptedRule};

use crate::prompting::{PromptBundle, Role};
use crate::types::ScreenState;

pub const MAX_IMAGES: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub role: Role,
    pub system: String,
    pub user: String,
    pub images: Vec<ScreenState>,
    pub temperature: f64,
    pub model_id: String,
    /// Forwarded to the API. Remote models may still be nondeterministic.
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn from_bundle(bundle: PromptBundle, model_id: impl Into<String>) -> Self {
        ChatRequest {
            role: bundle.role,
            system: bundle.system,
            user: bundle.user,
            images: bundle.images,
            temperature: 0.0,
            model_id: model_id.into(),
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} must be a finite value >= 0",
                self.temperature
            )));
        }
        if self.images.len() > MAX_IMAGES {
            return Err(BackendError::InvalidRequest(format!(
                "{} images attached, at most {MAX_IMAGES} allowed",
                self.images.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("request rejected ({status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no scripted rule matches this {role} request")]
    NoRuleMatched { role: &'static str },
    #[error("ground truth cannot proceed: {0}")]
    InconsistentWorld(String),
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<B> {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        (**self).complete(req)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        (**self).complete(req)
    }
}

/// Model id per agent role. Planning may use a text-only model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub planning: String,
    pub decision: String,
    pub reflection: String,
    pub memory: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::uniform("gpt-4o")
    }
}

impl ModelConfig {
    pub fn uniform(model: &str) -> Self {
        ModelConfig {
            planning: model.into(),
            decision: model.into(),
            reflection: model.into(),
            memory: model.into(),
        }
    }

    pub fn for_role(&self, role: Role) -> &str {
        match role {
            Role::Planning => &self.planning,
            Role::Decision => &self.decision,
            Role::Reflection => &self.reflection,
            Role::Memory => &self.memory,
        }
    }
}
