//! The six-operation action language: parser, canonical printer and
//! screen-context validator.
//!
//! Grammar (see `grammar/operation.ebnf`):
//!
//! ```text
//! Open app (NAME) | Tap (X, Y) | Swipe (X1, Y1), (X2, Y2) | Type (TEXT) | Home | Stop
//! ```
//!
//! Keywords are case-insensitive. `NAME`/`TEXT` extend greedily to the last
//! closing parenthesis and may not contain an unmatched `)`. Coordinates are
//! non-negative decimal integers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Operation;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse operation {raw:?}: {reason}")]
pub struct ParseError {
    pub reason: String,
    pub raw: String,
}

impl ParseError {
    fn new(raw: &str, reason: impl Into<String>) -> Self {
        ParseError {
            reason: reason.into(),
            raw: raw.to_string(),
        }
    }
}

/// What the decision agent can legally do on the current screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenContext {
    pub width: u32,
    pub height: u32,
    pub keyboard_active: bool,
    pub at_home: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationKind {
    NotHome,
    KeyboardInactive,
    OutOfBounds,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind:?}: {message}")]
pub struct ValidationError {
    pub kind: ValidationKind,
    pub message: String,
}

pub fn parse_operation(raw: &str) -> Result<Operation, ParseError> {
    let s = raw.trim();
    let (keyword, rest) = split_keyword(s).ok_or_else(|| ParseError::new(raw, "unknown action"))?;
    match keyword {
        Keyword::OpenApp => {
            let name = paren_text(rest).map_err(|r| ParseError::new(raw, r))?.trim();
            if name.is_empty() {
                return Err(ParseError::new(raw, "empty app name"));
            }
            Ok(Operation::OpenApp {
                name: name.to_string(),
            })
        }
        Keyword::Type => {
            let text = paren_text(rest).map_err(|r| ParseError::new(raw, r))?;
            if text.is_empty() {
                return Err(ParseError::new(raw, "empty text"));
            }
            Ok(Operation::Type {
                text: text.to_string(),
            })
        }
        Keyword::Tap => {
            let mut cur = Cursor::new(rest);
            let (x, y) = cur.pair().map_err(|r| ParseError::new(raw, r))?;
            cur.end().map_err(|r| ParseError::new(raw, r))?;
            Ok(Operation::Tap { x, y })
        }
        Keyword::Swipe => {
            let mut cur = Cursor::new(rest);
            let (x1, y1) = cur.pair().map_err(|r| ParseError::new(raw, r))?;
            cur.expect(',').map_err(|r| ParseError::new(raw, r))?;
            let (x2, y2) = cur.pair().map_err(|r| ParseError::new(raw, r))?;
            cur.end().map_err(|r| ParseError::new(raw, r))?;
            Ok(Operation::Swipe { x1, y1, x2, y2 })
        }
        Keyword::Home | Keyword::Stop => {
            if !rest.trim().is_empty() {
                return Err(ParseError::new(raw, "unexpected arguments"));
            }
            Ok(if keyword == Keyword::Home {
                Operation::Home
            } else {
                Operation::Stop
            })
        }
    }
}

/// Picks the first line of an Action section that parses.
pub fn parse_action_section(body: &str) -> Result<Operation, ParseError> {
    let mut first_err = None;
    for line in body.lines().filter(|l| !l.trim().is_empty()) {
        match parse_operation(line) {
            Ok(op) => return Ok(op),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(first_err.unwrap_or_else(|| ParseError::new(body, "empty action")))
}

pub fn render_operation(op: &Operation) -> String {
    match op {
        Operation::OpenApp { name } => format!("Open app ({name})"),
        Operation::Tap { x, y } => format!("Tap ({x}, {y})"),
        Operation::Swipe { x1, y1, x2, y2 } => format!("Swipe ({x1}, {y1}), ({x2}, {y2})"),
        Operation::Type { text } => format!("Type ({text})"),
        Operation::Home => "Home".to_string(),
        Operation::Stop => "Stop".to_string(),
    }
}

pub fn validate_operation<'a>(
    op: &'a Operation,
    ctx: &ScreenContext,
) -> Result<&'a Operation, ValidationError> {
    let in_bounds = |x: u32, y: u32| x < ctx.width && y < ctx.height;
    let fail = |kind, message: String| Err(ValidationError { kind, message });
    match op {
        Operation::OpenApp { name } if !ctx.at_home => fail(
            ValidationKind::NotHome,
            format!("cannot open app {name:?}: the current page is not the home page"),
        ),
        Operation::Type { .. } if !ctx.keyboard_active => fail(
            ValidationKind::KeyboardInactive,
            "the keyboard has not been activated, tap an input box first".to_string(),
        ),
        Operation::Tap { x, y } if !in_bounds(*x, *y) => fail(
            ValidationKind::OutOfBounds,
            format!("({x}, {y}) is outside the {}x{} screen", ctx.width, ctx.height),
        ),
        Operation::Swipe { x1, y1, x2, y2 } if !in_bounds(*x1, *y1) || !in_bounds(*x2, *y2) => fail(
            ValidationKind::OutOfBounds,
            format!(
                "swipe ({x1}, {y1}) -> ({x2}, {y2}) leaves the {}x{} screen",
                ctx.width, ctx.height
            ),
        ),
        _ => Ok(op),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Keyword {
    OpenApp,
    Tap,
    Swipe,
    Type,
    Home,
    Stop,
}

fn strip_word<'a>(s: &'a str, word: &str) -> Option<&'a str> {
    let head = s.get(..word.len())?;
    if !head.eq_ignore_ascii_case(word) {
        return None;
    }
    let rest = &s[word.len()..];
    // word boundary: the keyword must not run into more letters
    match rest.chars().next() {
        Some(c) if c.is_alphanumeric() || c == '_' => None,
        _ => Some(rest),
    }
}

fn split_keyword(s: &str) -> Option<(Keyword, &str)> {
    if let Some(rest) = strip_word(s, "open") {
        let trimmed = rest.trim_start();
        if trimmed.len() == rest.len() {
            return None;
        }
        return strip_word(trimmed, "app").map(|r| (Keyword::OpenApp, r));
    }
    [
        ("tap", Keyword::Tap),
        ("swipe", Keyword::Swipe),
        ("type", Keyword::Type),
        ("home", Keyword::Home),
        ("stop", Keyword::Stop),
    ]
    .into_iter()
    .find_map(|(w, k)| strip_word(s, w).map(|r| (k, r)))
}

/// Text between the first `(` and the last `)`, which must close the input.
fn paren_text(rest: &str) -> Result<&str, String> {
    let body = rest.trim();
    let inner = body
        .strip_prefix('(')
        .ok_or("expected '('")?
        .strip_suffix(')')
        .ok_or("expected ')' at end of action")?;
    let mut depth = 0i64;
    for c in inner.chars() {
        match c {
            '(' => depth += 1,
            ')' if depth == 0 => return Err("unmatched ')' in argument".into()),
            ')' => depth -= 1,
            _ => {}
        }
    }
    Ok(inner)
}

struct Cursor<'a> {
    s: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str) -> Self {
        Cursor { s }
    }

    fn skip_ws(&mut self) {
        self.s = self.s.trim_start();
    }

    fn expect(&mut self, c: char) -> Result<(), String> {
        self.skip_ws();
        match self.s.strip_prefix(c) {
            Some(r) => {
                self.s = r;
                Ok(())
            }
            None => Err(format!("expected '{c}'")),
        }
    }

    fn number(&mut self) -> Result<u32, String> {
        self.skip_ws();
        if self.s.starts_with('-') {
            return Err("negative coordinate".into());
        }
        let end = self
            .s
            .find(|c: char| !c.is_ascii_digit())
            .unwrap_or(self.s.len());
        if end == 0 {
            return Err("expected a coordinate".into());
        }
        let n = self.s[..end]
            .parse::<u32>()
            .map_err(|_| "coordinate out of range".to_string())?;
        self.s = &self.s[end..];
        Ok(n)
    }

    fn pair(&mut self) -> Result<(u32, u32), String> {
        self.expect('(')?;
        let x = self.number()?;
        self.expect(',')?;
        let y = self.number()?;
        self.expect(')')?;
        Ok((x, y))
    }

    fn end(&mut self) -> Result<(), String> {
        self.skip_ws();
        if self.s.is_empty() {
            Ok(())
        } else {
            Err(format!("trailing input {:?}", self.s))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(keyboard_active: bool, at_home: bool) -> ScreenContext {
        ScreenContext {
            width: 1080,
            height: 2340,
            keyboard_active,
            at_home,
        }
    }

    #[test]
    fn six_forms_parse() {
        assert_eq!(parse_operation("Open app (Notes)"), Ok(Operation::open_app("Notes")));
        assert_eq!(parse_operation("Tap (12, 34)"), Ok(Operation::tap(12, 34)));
        assert_eq!(
            parse_operation("Swipe (100, 900), (100, 300)"),
            Ok(Operation::swipe(100, 900, 100, 300))
        );
        assert_eq!(parse_operation("Type (hello)"), Ok(Operation::type_text("hello")));
        assert_eq!(parse_operation("Home"), Ok(Operation::Home));
        assert_eq!(parse_operation("Stop"), Ok(Operation::Stop));
    }

    #[test]
    fn whitespace_and_keyword_case_tolerated() {
        assert_eq!(parse_operation("  tap(  5 ,6 ) "), Ok(Operation::tap(5, 6)));
        assert_eq!(parse_operation("OPEN   APP ( Notes )"), Ok(Operation::open_app("Notes")));
        assert_eq!(
            parse_operation("swipe(1,2),(3,4)"),
            Ok(Operation::swipe(1, 2, 3, 4))
        );
        assert_eq!(parse_operation("hOmE"), Ok(Operation::Home));
    }

    #[test]
    fn text_is_greedy_to_last_paren() {
        assert_eq!(
            parse_operation("Type (a (b) c)"),
            Ok(Operation::type_text("a (b) c"))
        );
        // argument case is preserved
        assert_eq!(parse_operation("type (HeLLo)"), Ok(Operation::type_text("HeLLo")));
        assert!(parse_operation("Type (a) b)").is_err());
        assert!(parse_operation("Type (a) (b)").is_err());
    }

    #[test]
    fn rejects_missing_parentheses_and_negatives() {
        assert!(parse_operation("Tap 100 200").is_err());
        assert!(parse_operation("Tap (-1, 5)").is_err());
        assert!(parse_operation("Tap (99999999999, 5)").is_err());
        assert!(parse_operation("Typed (x)").is_err());
        assert!(parse_operation("Home now").is_err());
    }

    #[test]
    fn action_section_takes_first_valid_line() {
        let body = "I will tap the button.\nTap (1, 2)\nStop";
        assert_eq!(parse_action_section(body), Ok(Operation::tap(1, 2)));
        assert!(parse_action_section("nothing here").is_err());
        assert!(parse_action_section("").is_err());
    }

    #[test]
    fn render_canonical_forms() {
        assert_eq!(render_operation(&Operation::Stop), "Stop");
        assert_eq!(render_operation(&Operation::tap(12, 34)), "Tap (12, 34)");
        assert_eq!(
            render_operation(&Operation::swipe(1, 2, 3, 4)),
            "Swipe (1, 2), (3, 4)"
        );
    }

    #[test]
    fn validation_rules() {
        let ty = Operation::type_text("hi");
        assert_eq!(
            validate_operation(&ty, &ctx(false, false)).unwrap_err().kind,
            ValidationKind::KeyboardInactive
        );
        assert!(validate_operation(&ty, &ctx(true, false)).is_ok());
        let open = Operation::open_app("X");
        assert_eq!(
            validate_operation(&open, &ctx(false, false)).unwrap_err().kind,
            ValidationKind::NotHome
        );
        assert!(validate_operation(&open, &ctx(false, true)).is_ok());
        assert_eq!(
            validate_operation(&Operation::tap(5000, 10), &ctx(false, false))
                .unwrap_err()
                .kind,
            ValidationKind::OutOfBounds
        );
        assert_eq!(
            validate_operation(&Operation::tap(1080, 0), &ctx(false, false))
                .unwrap_err()
                .kind,
            ValidationKind::OutOfBounds
        );
        assert_eq!(
            validate_operation(&Operation::swipe(0, 0, 0, 2340), &ctx(false, false))
                .unwrap_err()
                .kind,
            ValidationKind::OutOfBounds
        );
        assert!(validate_operation(&Operation::Home, &ctx(false, false)).is_ok());
        assert!(validate_operation(&Operation::Stop, &ctx(false, false)).is_ok());
    }

    proptest! {
        #[test]
        fn parse_is_total(s in "\\PC*") {
            let _ = parse_operation(&s);
        }

        #[test]
        fn validate_does_not_mutate(x in 0u32..3000, y in 0u32..3000, kb: bool, home: bool) {
            let op = Operation::tap(x, y);
            let before = op.clone();
            let _ = validate_operation(&op, &ctx(kb, home));
            prop_assert_eq!(op, before);
        }
    }
}
