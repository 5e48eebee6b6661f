//! Declarative device description loaded from TOML.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{BBox, ElementKind};

pub const DEVICE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("device spec syntax error: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid device spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub schema_version: u32,
    pub width: u32,
    pub height: u32,
    /// Id of the home screen.
    pub home: String,
    /// App name to entry screen id.
    pub apps: BTreeMap<String, String>,
    /// Keep app input-field contents when the app is reopened.
    #[serde(default = "yes")]
    pub preserve_app_state: bool,
    pub screens: Vec<ScreenSpec>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenSpec {
    pub id: String,
    /// Owning app, used when app state is not preserved across reopen.
    #[serde(default)]
    pub app: Option<String>,
    #[serde(default)]
    pub keyboard_active: bool,
    #[serde(default)]
    pub scroll: Option<ScrollSpec>,
    #[serde(default)]
    pub elements: Vec<ElementSpec>,
    #[serde(default)]
    pub input_fields: Vec<InputFieldSpec>,
    #[serde(default)]
    pub lists: Vec<ListSpec>,
}

/// A scrollable region. Non-fixed elements are laid out in content
/// coordinates and shown only while fully inside the viewport.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScrollSpec {
    pub viewport: BBox,
    #[serde(default)]
    pub max_x: u32,
    #[serde(default)]
    pub max_y: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementSpec {
    pub kind: ElementKind,
    pub content: String,
    pub bbox: BBox,
    #[serde(default)]
    pub fixed: bool,
    #[serde(default)]
    pub on_tap: Vec<Effect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFieldSpec {
    pub id: String,
    pub bbox: BBox,
    #[serde(default)]
    pub placeholder: String,
}

/// Rows of text rendered from an app-state list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ListSpec {
    pub key: String,
    pub origin: (u32, u32),
    pub row_width: u32,
    pub row_height: u32,
    pub max_rows: u32,
}

/// What tapping an element does. `{field:ID}` inside a value is replaced
/// with the field's current contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Goto(String),
    SetField { field: String, value: String },
    ToggleKeyboard,
    AppendState { key: String, value: String },
    SetState { key: String, value: String },
    None,
}

impl DeviceSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, SpecError> {
        let spec: DeviceSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, SpecError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// The demo device bundled with the crate.
    pub fn demo() -> Self {
        Self::from_toml_str(include_str!("../../fixtures/demo_device.toml"))
            .expect("bundled demo device is valid")
    }

    pub fn screen(&self, id: &str) -> Option<&ScreenSpec> {
        self.screens.iter().find(|s| s.id == id)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let bad = |m: String| Err(SpecError::Invalid(m));
        if self.schema_version != DEVICE_SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {DEVICE_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be positive".into());
        }
        let mut ids = HashSet::new();
        for s in &self.screens {
            if !ids.insert(s.id.as_str()) {
                return bad(format!("duplicate screen id {:?}", s.id));
            }
        }
        if !ids.contains(self.home.as_str()) {
            return bad(format!("home screen {:?} does not exist", self.home));
        }
        for (app, entry) in &self.apps {
            if !ids.contains(entry.as_str()) {
                return bad(format!("app {app:?} enters missing screen {entry:?}"));
            }
        }
        let fields: HashSet<&str> = self
            .screens
            .iter()
            .flat_map(|s| s.input_fields.iter().map(|f| f.id.as_str()))
            .collect();
        for s in &self.screens {
            if let Some(app) = &s.app {
                if !self.apps.contains_key(app) {
                    return bad(format!("screen {:?} belongs to unknown app {app:?}", s.id));
                }
            }
            let within = |b: &BBox| !b.is_empty() && b.within(self.width, self.height);
            if let Some(scroll) = &s.scroll {
                if !within(&scroll.viewport) {
                    return bad(format!("screen {:?}: viewport out of bounds", s.id));
                }
            }
            for e in &s.elements {
                if e.content.trim().is_empty() {
                    return bad(format!("screen {:?}: element with empty content", s.id));
                }
                let scrolls = s.scroll.is_some() && !e.fixed;
                if e.bbox.is_empty() || (!scrolls && !within(&e.bbox)) {
                    return bad(format!(
                        "screen {:?}: element {:?} bbox out of bounds",
                        s.id, e.content
                    ));
                }
                for effect in &e.on_tap {
                    match effect {
                        Effect::Goto(t) if !ids.contains(t.as_str()) => {
                            return bad(format!(
                                "screen {:?}: element {:?} goes to missing screen {t:?}",
                                s.id, e.content
                            ))
                        }
                        Effect::SetField { field, .. } if !fields.contains(field.as_str()) => {
                            return bad(format!(
                                "screen {:?}: element {:?} sets missing field {field:?}",
                                s.id, e.content
                            ))
                        }
                        Effect::AppendState { value, .. } | Effect::SetState { value, .. } => {
                            for f in field_refs(value) {
                                if !fields.contains(f) {
                                    return bad(format!(
                                        "screen {:?}: element {:?} references missing field {f:?}",
                                        s.id, e.content
                                    ));
                                }
                            }
                        }
                        _ => {}
                    }
                }
            }
            for f in &s.input_fields {
                if !within(&f.bbox) {
                    return bad(format!("screen {:?}: field {:?} out of bounds", s.id, f.id));
                }
            }
            for l in &s.lists {
                let bottom = u64::from(l.origin.1) + u64::from(l.row_height) * u64::from(l.max_rows);
                if l.row_height == 0
                    || l.row_width == 0
                    || u64::from(l.origin.0) + u64::from(l.row_width) > u64::from(self.width)
                    || bottom > u64::from(self.height)
                {
                    return bad(format!("screen {:?}: list {:?} out of bounds", s.id, l.key));
                }
            }
            // Tap targets sharing a coordinate space must not overlap.
            let mut groups: [Vec<(&str, BBox)>; 2] = [Vec::new(), Vec::new()];
            for e in &s.elements {
                if e.on_tap.is_empty() {
                    continue;
                }
                let scrolls = s.scroll.is_some() && !e.fixed;
                groups[usize::from(scrolls)].push((e.content.as_str(), e.bbox));
            }
            for f in &s.input_fields {
                groups[0].push((f.id.as_str(), f.bbox));
            }
            for group in &groups {
                for (i, (a, ab)) in group.iter().enumerate() {
                    for (b, bb) in &group[i + 1..] {
                        if ab.intersects(bb) {
                            return bad(format!(
                                "screen {:?}: tap targets {a:?} and {b:?} overlap",
                                s.id
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Field ids referenced as `{field:ID}` in a value template.
pub(crate) fn field_refs(value: &str) -> impl Iterator<Item = &str> {
    value.split("{field:").skip(1).filter_map(|s| s.split_once('}').map(|(id, _)| id))
}
