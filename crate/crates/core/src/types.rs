//! Domain types shared by every module.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeError {
    #[error("instruction text must not be empty")]
    EmptyInstruction,
    #[error("screen dimensions must be positive, got {width}x{height}")]
    EmptyScreen { width: u32, height: u32 },
    #[error("memory entry for iteration {got} does not follow iteration {last}")]
    MemoryOrder { last: usize, got: usize },
    #[error("unknown locale {0:?}, expected en or zh")]
    UnknownLocale(String),
}

/// A user instruction plus any operation hints injected for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    text: String,
    #[serde(default)]
    hints: Vec<String>,
}

impl Instruction {
    pub fn new(text: impl Into<String>) -> Result<Self, TypeError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(TypeError::EmptyInstruction);
        }
        Ok(Self {
            text,
            hints: Vec::new(),
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn hints(&self) -> &[String] {
        &self.hints
    }

    /// Appends hints after any existing ones. Blank hints are skipped.
    pub fn with_hints<I, S>(mut self, hints: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.hints.extend(
            hints
                .into_iter()
                .map(Into::into)
                .filter(|h| !h.trim().is_empty()),
        );
        self
    }
}

/// Prompt and perception language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Locale {
    #[default]
    En,
    Zh,
}

impl Locale {
    pub fn as_str(self) -> &'static str {
        match self {
            Locale::En => "en",
            Locale::Zh => "zh",
        }
    }
}

impl fmt::Display for Locale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Locale {
    type Err = TypeError;
    fn from_str(s: &str) -> Result<Self, TypeError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" => Ok(Locale::En),
            "zh" => Ok(Locale::Zh),
            other => Err(TypeError::UnknownLocale(other.to_string())),
        }
    }
}

/// Identifier of an observed device state.
///
/// The simulator derives it from its symbolic state; real devices use a
/// digest of the screenshot bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub String);

impl StateId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A captured screenshot. The raster is opaque to everything except the
/// perception layer.
#[derive(Clone, PartialEq, Eq)]
pub struct ScreenState {
    image: Arc<[u8]>,
    width: u32,
    height: u32,
    state_id: StateId,
}

impl ScreenState {
    pub fn new(
        image: impl Into<Arc<[u8]>>,
        width: u32,
        height: u32,
        state_id: StateId,
    ) -> Result<Self, TypeError> {
        if width == 0 || height == 0 {
            return Err(TypeError::EmptyScreen { width, height });
        }
        Ok(Self {
            image: image.into(),
            width,
            height,
            state_id,
        })
    }

    pub fn image(&self) -> &[u8] {
        &self.image
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn state_id(&self) -> &StateId {
        &self.state_id
    }
}

impl fmt::Debug for ScreenState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScreenState")
            .field("state_id", &self.state_id)
            .field("width", &self.width)
            .field("height", &self.height)
            .field("image_bytes", &self.image.len())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Text,
    Icon,
}

impl ElementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Text => "text",
            ElementKind::Icon => "icon",
        }
    }
}

/// Axis-aligned pixel rectangle, `x1..x2` by `y1..y2` (upper bounds exclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl From<[u32; 4]> for BBox {
    fn from(v: [u32; 4]) -> Self {
        BBox {
            x1: v[0],
            y1: v[1],
            x2: v[2],
            y2: v[3],
        }
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BBox {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn is_empty(&self) -> bool {
        self.x2 <= self.x1 || self.y2 <= self.y1
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x1 && x < self.x2 && y >= self.y1 && y < self.y2
    }

    pub fn center(&self) -> (u32, u32) {
        ((self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2)
    }

    pub fn area(&self) -> u64 {
        if self.is_empty() {
            0
        } else {
            u64::from(self.x2 - self.x1) * u64::from(self.y2 - self.y1)
        }
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.intersection_area(other) > 0
    }

    fn intersection_area(&self, other: &BBox) -> u64 {
        let x1 = self.x1.max(other.x1);
        let y1 = self.y1.max(other.y1);
        let x2 = self.x2.min(other.x2);
        let y2 = self.y2.min(other.y2);
        BBox { x1, y1, x2, y2 }.area()
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x2 <= width && self.y2 <= height
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerceptionElement {
    pub kind: ElementKind,
    pub content: String,
    pub center: (u32, u32),
    pub bbox: BBox,
}

impl PerceptionElement {
    pub fn new(kind: ElementKind, content: impl Into<String>, bbox: BBox) -> Self {
        PerceptionElement {
            kind,
            content: content.into(),
            center: bbox.center(),
            bbox,
        }
    }
}

/// Located text and icon elements of one screenshot, plus keyboard status.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerceptionResult {
    pub elements: Vec<PerceptionElement>,
    pub keyboard_active: bool,
}

impl PerceptionResult {
    pub fn new(mut elements: Vec<PerceptionElement>, keyboard_active: bool) -> Self {
        sort_elements(&mut elements);
        PerceptionResult {
            elements,
            keyboard_active,
        }
    }

    /// First element whose box contains the point.
    pub fn element_at(&self, x: u32, y: u32) -> Option<(usize, &PerceptionElement)> {
        self.elements
            .iter()
            .enumerate()
            .find(|(_, e)| e.bbox.contains(x, y))
    }
}

/// Top-to-bottom, then left-to-right by center.
pub fn sort_elements(elements: &mut [PerceptionElement]) {
    elements.sort_by(|a, b| {
        (a.center.1, a.center.0, &a.content).cmp(&(b.center.1, b.center.0, &b.content))
    });
}

/// One of the six actions the decision agent may emit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Operation {
    OpenApp { name: String },
    Tap { x: u32, y: u32 },
    Swipe { x1: u32, y1: u32, x2: u32, y2: u32 },
    Type { text: String },
    Home,
    Stop,
}

impl Operation {
    pub fn open_app(name: impl Into<String>) -> Self {
        Operation::OpenApp { name: name.into() }
    }

    pub fn tap(x: u32, y: u32) -> Self {
        Operation::Tap { x, y }
    }

    pub fn swipe(x1: u32, y1: u32, x2: u32, y2: u32) -> Self {
        Operation::Swipe { x1, y1, x2, y2 }
    }

    pub fn type_text(text: impl Into<String>) -> Self {
        Operation::Type { text: text.into() }
    }

    pub fn is_stop(&self) -> bool {
        matches!(self, Operation::Stop)
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::opspace::render_operation(self))
    }
}

impl From<Operation> for String {
    fn from(op: Operation) -> Self {
        crate::opspace::render_operation(&op)
    }
}

impl TryFrom<String> for Operation {
    type Error = crate::opspace::ParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        crate::opspace::parse_operation(&s)
    }
}

/// A parsed decision-agent reply: Thought / Action / Operation sections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationRecord {
    pub thought: String,
    pub operation: Operation,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Correct,
    Erroneous,
    Ineffective,
}

impl Verdict {
    /// Option letter used by the reflection prompt.
    pub fn letter(self) -> char {
        match self {
            Verdict::Correct => 'A',
            Verdict::Erroneous => 'B',
            Verdict::Ineffective => 'C',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(Verdict::Correct),
            'B' => Some(Verdict::Erroneous),
            'C' => Some(Verdict::Ineffective),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionOutcome {
    pub verdict: Verdict,
    pub thought: String,
}

/// Completed-contents summary maintained by the planning agent.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskProgress(pub String);

impl TaskProgress {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub iteration: usize,
    pub content: String,
}

/// Per-task short-term memory of focus content.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MemoryUnit {
    entries: Vec<MemoryEntry>,
}

impl MemoryUnit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Returns a new unit with one more entry; iteration indices must increase.
    pub fn with_entry(&self, iteration: usize, content: impl Into<String>) -> Result<Self, TypeError> {
        if let Some(last) = self.entries.last() {
            if iteration <= last.iteration {
                return Err(TypeError::MemoryOrder {
                    last: last.iteration,
                    got: iteration,
                });
            }
        }
        let mut next = self.clone();
        next.entries.push(MemoryEntry {
            iteration,
            content: content.into(),
        });
        Ok(next)
    }

    /// True if `self` is a prefix of `other`.
    pub fn is_prefix_of(&self, other: &MemoryUnit) -> bool {
        other.entries.len() >= self.entries.len()
            && other.entries[..self.entries.len()] == self.entries[..]
    }
}
