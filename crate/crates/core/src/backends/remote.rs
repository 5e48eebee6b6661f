//! Chat-completions client over HTTP+JSON.

use std::time::Duration;

use base64::Engine as _;
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatRequest};
use crate::retry::RetryPolicy;

pub const ENV_API_BASE: &str = "AGENT_API_BASE";
pub const ENV_API_KEY: &str = "AGENT_API_KEY";

pub struct RemoteBackend {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("base_url", &self.base_url)
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

impl RemoteBackend {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        RemoteBackend {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            agent,
            retry: RetryPolicy::default(),
        }
    }

    /// Reads `AGENT_API_BASE` and `AGENT_API_KEY`.
    pub fn from_env() -> Result<Self, BackendError> {
        let base = std::env::var(ENV_API_BASE)
            .map_err(|_| BackendError::TransportError(format!("{ENV_API_BASE} is not set")))?;
        let key = std::env::var(ENV_API_KEY)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| BackendError::AuthError(format!("{ENV_API_KEY} is not set")))?;
        Ok(Self::new(base, key))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// The JSON body sent for `req`.
    pub fn request_body(req: &ChatRequest) -> Value {
        let user = if req.images.is_empty() {
            Value::String(req.user.clone())
        } else {
            let mut parts = vec![json!({"type": "text", "text": req.user})];
            for img in &req.images {
                let mime = if img.image().starts_with(&[0xFF, 0xD8]) {
                    "image/jpeg"
                } else {
                    "image/png"
                };
                let data = base64::engine::general_purpose::STANDARD.encode(img.image());
                parts.push(json!({
                    "type": "image_url",
                    "image_url": {"url": format!("data:{mime};base64,{data}")}
                }));
            }
            Value::Array(parts)
        };
        let mut body = json!({
            "model": req.model_id,
            "temperature": req.temperature,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": user},
            ],
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn attempt(&self, body: &Value) -> Result<String, (BackendError, bool)> {
        let url = format!("{}/chat/completions", self.base_url);
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| (BackendError::TransportError(e.to_string()), true))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| (BackendError::TransportError(e.to_string()), true))?;
        match status {
            200..=299 => extract_content(&text).map_err(|e| (e, false)),
            401 | 403 => Err((BackendError::AuthError(error_message(status, &text)), false)),
            408 | 429 | 500..=599 => Err((
                BackendError::TransportError(error_message(status, &text)),
                true,
            )),
            _ => Err((
                BackendError::Rejected {
                    status,
                    message: error_message(status, &text),
                },
                false,
            )),
        }
    }
}

fn extract_content(text: &str) -> Result<String, BackendError> {
    let v: Value = serde_json::from_str(text).map_err(|e| BackendError::Protocol(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Protocol("no choices[0].message.content in response".into()))
}

fn error_message(status: u16, body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| {
            v.pointer("/error/message")
                .or_else(|| v.get("error"))
                .and_then(Value::as_str)
                .map(str::to_string)
        })
        .unwrap_or_else(|| format!("HTTP {status}"))
}

impl ChatBackend for RemoteBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        req.validate()?;
        let body = Self::request_body(req);
        self.retry.run(|attempt| {
            tracing::debug!(attempt, role = req.role.as_str(), model = %req.model_id, "chat request");
            self.attempt(&body)
        })
    }
}
