//! The agent roles as functions: render a prompt, call the backend, parse
//! the reply.

use std::sync::Arc;

use thiserror::Error;

use crate::backends::{BackendError, ChatBackend, ChatRequest, ModelConfig};
use crate::opspace::{parse_action_section, validate_operation, ParseError, ScreenContext, ValidationError};
use crate::prompting::{
    headers, normalize_answer, parse_sectioned_reply, DecisionInputs, PromptBundle, PromptError,
    ReplyError, TemplateSet,
};
use crate::types::{
    Instruction, MemoryUnit, OperationRecord, PerceptionResult, ReflectionOutcome, ScreenState,
    TaskProgress, TypeError,
};

/// A decision reply that cannot be executed. The orchestrator retries.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecisionFault {
    #[error("{0}")]
    Reply(#[from] ReplyError),
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Reply(#[from] ReplyError),
    #[error(transparent)]
    Memory(#[from] TypeError),
    #[error("unusable decision: {0}")]
    Fault(#[from] DecisionFault),
}

/// Backend, templates and model ids shared by all roles. Stateless per task.
#[derive(Clone)]
pub struct Agents {
    backend: Arc<dyn ChatBackend>,
    templates: Arc<TemplateSet>,
    models: ModelConfig,
    seed: Option<u64>,
}

impl Agents {
    pub fn new(backend: Arc<dyn ChatBackend>, templates: Arc<TemplateSet>) -> Self {
        Agents {
            backend,
            templates,
            models: ModelConfig::default(),
            seed: None,
        }
    }

    pub fn with_models(mut self, models: ModelConfig) -> Self {
        self.models = models;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    fn call(&self, bundle: PromptBundle) -> Result<String, BackendError> {
        let model = self.models.for_role(bundle.role).to_string();
        let mut req = ChatRequest::from_bundle(bundle, model);
        req.seed = self.seed;
        self.backend.complete(&req)
    }

    /// Summarizes progress after the latest correct operation.
    pub fn plan_update(
        &self,
        ins: &Instruction,
        history: &[OperationRecord],
        progress: &TaskProgress,
        memory: &MemoryUnit,
    ) -> Result<TaskProgress, AgentError> {
        let prompt = self.templates.render_planning_prompt(ins, history, progress, memory)?;
        let reply = self.call(prompt)?;
        let parsed = parse_sectioned_reply(&reply, &[headers::COMPLETED_CONTENTS])?;
        Ok(TaskProgress(parsed.require(headers::COMPLETED_CONTENTS)?.to_string()))
    }

    /// One decision attempt. Unusable replies come back as [`AgentError::Fault`].
    pub fn decide(&self, inputs: &DecisionInputs<'_>, ctx: &ScreenContext) -> Result<OperationRecord, AgentError> {
        let prompt = self.templates.render_decision_prompt(inputs)?;
        let reply = self.call(prompt)?;
        Ok(parse_decision(&reply, ctx)?)
    }

    /// Appends focus content seen on this screen, if the model reports any.
    pub fn update_memory(
        &self,
        ins: &Instruction,
        memory: &MemoryUnit,
        screen: &ScreenState,
        perception: &PerceptionResult,
        iteration: usize,
    ) -> Result<MemoryUnit, AgentError> {
        let prompt = self.templates.render_memory_prompt(ins, memory, screen, perception)?;
        let reply = self.call(prompt)?;
        let parsed = parse_sectioned_reply(&reply, &[headers::IMPORTANT_CONTENT])?;
        let content = parsed.require(headers::IMPORTANT_CONTENT)?;
        if is_none(content) {
            return Ok(memory.clone());
        }
        Ok(memory.with_entry(iteration, content)?)
    }

    pub fn reflect(
        &self,
        ins: &Instruction,
        memory: &MemoryUnit,
        record: &OperationRecord,
        before: (&ScreenState, &PerceptionResult),
        after: (&ScreenState, &PerceptionResult),
    ) -> Result<ReflectionOutcome, AgentError> {
        let prompt = self
            .templates
            .render_reflection_prompt(ins, memory, record, before, after)?;
        let reply = self.call(prompt)?;
        let parsed = parse_sectioned_reply(&reply, &[headers::ANSWER])?;
        Ok(ReflectionOutcome {
            verdict: normalize_answer(parsed.require(headers::ANSWER)?)?,
            thought: parsed.get(headers::THOUGHT).unwrap_or_default().to_string(),
        })
    }
}

/// Parses and validates a decision reply.
pub fn parse_decision(reply: &str, ctx: &ScreenContext) -> Result<OperationRecord, DecisionFault> {
    let parsed = parse_sectioned_reply(
        reply,
        &[headers::THOUGHT, headers::ACTION, headers::OPERATION],
    )?;
    let operation = parse_action_section(parsed.require(headers::ACTION)?)?;
    validate_operation(&operation, ctx)?;
    Ok(OperationRecord {
        thought: parsed.require(headers::THOUGHT)?.to_string(),
        operation,
        description: parsed.require(headers::OPERATION)?.to_string(),
    })
}

fn is_none(content: &str) -> bool {
    let c = content.trim().trim_end_matches('.');
    c.is_empty() || c.eq_ignore_ascii_case("none")
}
