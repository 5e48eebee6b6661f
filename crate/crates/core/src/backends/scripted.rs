use super::{BackendError, ChatBackend, ChatRequest};
use crate::prompting::Role;

type Matcher = Box<dyn Fn(&ChatRequest) -> bool + Send + Sync>;
type Reply = Box<dyn Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync>;

/// One scripted response. The matcher sees the request; any world state it
/// needs is captured by the closures.
pub struct ScriptedRule {
    pub name: String,
    matcher: Matcher,
    reply: Reply,
}

impl ScriptedRule {
    pub fn new(
        name: impl Into<String>,
        matcher: impl Fn(&ChatRequest) -> bool + Send + Sync + 'static,
        reply: impl Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync + 'static,
    ) -> Self {
        ScriptedRule {
            name: name.into(),
            matcher: Box::new(matcher),
            reply: Box::new(reply),
        }
    }

    /// Matches every request for `role` and always answers `text`.
    pub fn fixed(role: Role, text: impl Into<String>) -> Self {
        let text = text.into();
        ScriptedRule::new(
            format!("fixed {}", role.as_str()),
            move |r| r.role == role,
            move |_| Ok(text.clone()),
        )
    }

    /// Matches every request for `role`.
    pub fn for_role(
        role: Role,
        reply: impl Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync + 'static,
    ) -> Self {
        ScriptedRule::new(role.as_str(), move |r| r.role == role, reply)
    }
}

/// Answers from the first matching rule, in declaration order.
#[derive(Default)]
pub struct ScriptedBackend {
    rules: Vec<ScriptedRule>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptedRule>) -> Self {
        ScriptedBackend { rules }
    }

    pub fn push(&mut self, rule: ScriptedRule) {
        self.rules.push(rule);
    }

    pub fn rules(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().map(|r| r.name.as_str())
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        req.validate()?;
        let rule = self
            .rules
            .iter()
            .find(|r| (r.matcher)(req))
            .ok_or(BackendError::NoRuleMatched {
                role: req.role.as_str(),
            })?;
        tracing::trace!(rule = %rule.name, role = req.role.as_str(), "scripted reply");
        (rule.reply)(req)
    }
}
