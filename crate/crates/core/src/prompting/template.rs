//! A minimal template language for prompt files.
//!
//! A file is a sequence of sections, each opened by a line `@name`. Inside a
//! section:
//!
//! - `{slot}` is replaced by a text binding,
//! - `{?flag}...{/flag}` is kept when the flag is true,
//! - `{!flag}...{/flag}` is kept when the flag is false,
//! - `{{` and `}}` are literal braces.
//!
//! The newline that ends a section's last line belongs to the next `@`
//! header, so a section body does not end with a newline unless the file has
//! a blank line there.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template}: {message}")]
    Syntax { template: String, message: String },
    #[error("template {template} has no section @{section}")]
    MissingSection { template: String, section: String },
    #[error("template {template}: no binding for {{{slot}}}")]
    MissingBinding { template: String, slot: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Node {
    Text(String),
    Slot(String),
    Cond {
        flag: String,
        when: bool,
        body: Vec<Node>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    name: String,
    sections: BTreeMap<String, Vec<Node>>,
}

/// Slot and flag values for one render.
#[derive(Debug, Default, Clone)]
pub struct Bindings {
    text: HashMap<&'static str, String>,
    flags: HashMap<&'static str, bool>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(mut self, slot: &'static str, value: impl Into<String>) -> Self {
        self.text.insert(slot, value.into());
        self
    }

    pub fn flag(mut self, name: &'static str, value: bool) -> Self {
        self.flags.insert(name, value);
        self
    }
}

impl Template {
    pub fn parse(name: &str, source: &str) -> Result<Self, TemplateError> {
        let syntax = |message: String| TemplateError::Syntax {
            template: name.to_string(),
            message,
        };
        let mut sections = BTreeMap::new();
        let mut current: Option<(String, String)> = None;
        for line in source.split_inclusive('\n') {
            let bare = line.trim_end_matches(['\n', '\r']);
            if let Some(header) = bare.strip_prefix('@') {
                if !is_name(header) {
                    return Err(syntax(format!("bad section header {bare:?}")));
                }
                if let Some((n, body)) = current.take() {
                    finish(&mut sections, n, body, name)?;
                }
                if sections.contains_key(header) {
                    return Err(syntax(format!("duplicate section @{header}")));
                }
                current = Some((header.to_string(), String::new()));
                continue;
            }
            match &mut current {
                Some((_, body)) => body.push_str(line),
                None if bare.trim().is_empty() => {}
                None => return Err(syntax("text before the first @section".into())),
            }
        }
        if let Some((n, body)) = current.take() {
            finish(&mut sections, n, body, name)?;
        }
        Ok(Template {
            name: name.to_string(),
            sections,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn render(&self, section: &str, b: &Bindings) -> Result<String, TemplateError> {
        let nodes = self
            .sections
            .get(section)
            .ok_or_else(|| TemplateError::MissingSection {
                template: self.name.clone(),
                section: section.to_string(),
            })?;
        let mut out = String::new();
        self.emit(nodes, b, &mut out)?;
        Ok(out)
    }

    fn emit(&self, nodes: &[Node], b: &Bindings, out: &mut String) -> Result<(), TemplateError> {
        let missing = |slot: &str| TemplateError::MissingBinding {
            template: self.name.clone(),
            slot: slot.to_string(),
        };
        for node in nodes {
            match node {
                Node::Text(t) => out.push_str(t),
                Node::Slot(s) => out.push_str(b.text.get(s.as_str()).ok_or_else(|| missing(s))?),
                Node::Cond { flag, when, body } => {
                    let v = *b.flags.get(flag.as_str()).ok_or_else(|| missing(flag))?;
                    if v == *when {
                        self.emit(body, b, out)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn is_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn finish(
    sections: &mut BTreeMap<String, Vec<Node>>,
    section: String,
    mut body: String,
    template: &str,
) -> Result<(), TemplateError> {
    if body.ends_with('\n') {
        body.pop();
        if body.ends_with('\r') {
            body.pop();
        }
    }
    let nodes = parse_body(&body).map_err(|message| TemplateError::Syntax {
        template: template.to_string(),
        message: format!("@{section}: {message}"),
    })?;
    sections.insert(section, nodes);
    Ok(())
}

fn parse_body(body: &str) -> Result<Vec<Node>, String> {
    // Stack of open conditionals: (flag, when, nodes collected so far).
    let mut stack: Vec<(String, bool, Vec<Node>)> = vec![(String::new(), true, Vec::new())];
    let mut text = String::new();
    let mut rest = body;
    let flush = |text: &mut String, nodes: &mut Vec<Node>| {
        if !text.is_empty() {
            nodes.push(Node::Text(std::mem::take(text)));
        }
    };
    while let Some(i) = rest.find(['{', '}']) {
        text.push_str(&rest[..i]);
        let tail = &rest[i..];
        if tail.starts_with("{{") || tail.starts_with("}}") {
            text.push_str(&tail[..1]);
            rest = &tail[2..];
            continue;
        }
        if tail.starts_with('}') {
            return Err("unmatched '}'".into());
        }
        let close = tail.find('}').ok_or("unclosed '{'")?;
        let tag = &tail[1..close];
        rest = &tail[close + 1..];
        let nodes = &mut stack.last_mut().expect("root frame").2;
        flush(&mut text, nodes);
        if let Some(flag) = tag.strip_prefix('?').or_else(|| tag.strip_prefix('!')) {
            if !is_name(flag) {
                return Err(format!("bad conditional {{{tag}}}"));
            }
            stack.push((flag.to_string(), tag.starts_with('?'), Vec::new()));
        } else if let Some(flag) = tag.strip_prefix('/') {
            if stack.len() == 1 || stack.last().map(|f| f.0.as_str()) != Some(flag) {
                return Err(format!("unexpected {{/{flag}}}"));
            }
            let (flag, when, body) = stack.pop().expect("checked");
            stack
                .last_mut()
                .expect("root frame")
                .2
                .push(Node::Cond { flag, when, body });
        } else if is_name(tag) {
            nodes.push(Node::Slot(tag.to_string()));
        } else {
            return Err(format!("bad slot {{{tag}}}"));
        }
    }
    text.push_str(rest);
    if stack.len() != 1 {
        return Err(format!("unclosed {{?{}}}", stack.last().expect("frame").0));
    }
    let mut root = stack.pop().expect("root frame").2;
    flush(&mut text, &mut root);
    Ok(root)
}
