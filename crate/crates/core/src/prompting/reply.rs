//! Parsing of `### Header ###` sectioned agent replies.

use thiserror::Error;

use crate::types::Verdict;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplyError {
    #[error("reply has no \"### {0} ###\" section")]
    MissingSection(String),
    #[error("reply answer {0:?} is not one of A, B or C")]
    MalformedAnswer(String),
}

/// Sections in reply order. Headers are unique.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SectionedReply {
    sections: Vec<(String, String)>,
}

impl SectionedReply {
    pub fn sections(&self) -> &[(String, String)] {
        &self.sections
    }

    pub fn get(&self, header: &str) -> Option<&str> {
        let key = header_key(header);
        self.sections
            .iter()
            .find(|(h, _)| header_key(h) == key)
            .map(|(_, b)| b.as_str())
    }

    pub fn require(&self, header: &str) -> Result<&str, ReplyError> {
        self.get(header)
            .ok_or_else(|| ReplyError::MissingSection(header.to_string()))
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }
}

fn header_key(h: &str) -> String {
    h.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn header_of(line: &str) -> Option<&str> {
    let inner = line.trim().strip_prefix("###")?.strip_suffix("###")?.trim();
    (!inner.is_empty() && !inner.contains('#')).then_some(inner)
}

/// Splits a reply on `### Header ###` lines. Text before the first header is
/// ignored; a repeated header is kept as body text of the open section.
pub fn parse_sectioned_reply(raw: &str, required: &[&str]) -> Result<SectionedReply, ReplyError> {
    let mut sections: Vec<(String, Vec<&str>)> = Vec::new();
    for line in raw.lines() {
        if let Some(h) = header_of(line) {
            let key = header_key(h);
            if !sections.iter().any(|(s, _)| header_key(s) == key) {
                sections.push((h.to_string(), Vec::new()));
                continue;
            }
        }
        if let Some((_, body)) = sections.last_mut() {
            body.push(line);
        }
    }
    let reply = SectionedReply {
        sections: sections
            .into_iter()
            .map(|(h, lines)| (h, trim_blank_lines(&lines)))
            .collect(),
    };
    for r in required {
        reply.require(r)?;
    }
    Ok(reply)
}

fn trim_blank_lines(lines: &[&str]) -> String {
    let start = lines.iter().position(|l| !l.trim().is_empty());
    let end = lines.iter().rposition(|l| !l.trim().is_empty());
    match (start, end) {
        (Some(s), Some(e)) => lines[s..=e].join("\n"),
        _ => String::new(),
    }
}

/// Accepts `A`, `A.`, `(A)`, `Answer: A`, `A: text` and similar, in any case.
pub fn normalize_answer(body: &str) -> Result<Verdict, ReplyError> {
    let malformed = || ReplyError::MalformedAnswer(body.trim().to_string());
    let line = body
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .ok_or_else(malformed)?;
    let mut s = line;
    if s.len() >= 6 && s[..6].eq_ignore_ascii_case("answer") {
        s = s[6..].trim_start_matches([':', ' ', '\t']);
    }
    let s = s.trim_start_matches(['(', '[', '"', '\'', '*', ' ']);
    let mut chars = s.chars();
    let verdict = chars.next().and_then(Verdict::from_letter).ok_or_else(malformed)?;
    let rest = chars.as_str();
    let ok = rest.trim().is_empty()
        || rest.starts_with(['.', ':', ')', ']', '"', '\'', '*', '-', ','])
        || rest.starts_with(" -")
        || rest.starts_with(" :");
    if ok {
        Ok(verdict)
    } else {
        Err(malformed())
    }
}
