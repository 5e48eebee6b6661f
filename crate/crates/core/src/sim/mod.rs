//! Deterministic mobile-device simulator.
//!
//! Screens, elements and tap effects come from a [`DeviceSpec`]. Every
//! executed operation pushes a snapshot so the last operations can be
//! reverted; the stack keeps at most [`SNAPSHOT_DEPTH`] entries.

mod raster;
pub mod spec;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::device::{Device, DeviceError, ExecutionReport, RollbackMechanism};
use crate::perception::{PerceptionError, Perceiver};
use crate::types::{
    BBox, ElementKind, Operation, PerceptionElement, PerceptionResult, ScreenState, StateId,
};

pub use spec::{DeviceSpec, Effect, ElementSpec, InputFieldSpec, ListSpec, ScreenSpec, ScrollSpec, SpecError};

pub const SNAPSHOT_DEPTH: usize = 8;

/// Mutable part of the simulated device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimState {
    pub screen: String,
    pub fields: BTreeMap<String, String>,
    pub scroll: BTreeMap<String, (u32, u32)>,
    pub keyboard: bool,
    pub focused: Option<String>,
    pub app_state: BTreeMap<String, Vec<String>>,
}

impl SimState {
    pub fn field(&self, id: &str) -> &str {
        self.fields.get(id).map(String::as_str).unwrap_or("")
    }

    pub fn state_values(&self, key: &str) -> &[String] {
        self.app_state.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn state_id(&self) -> StateId {
        #[derive(Serialize)]
        struct Digestable<'a> {
            fields: &'a BTreeMap<String, String>,
            scroll: &'a BTreeMap<String, (u32, u32)>,
            keyboard: bool,
            focused: &'a Option<String>,
            app_state: &'a BTreeMap<String, Vec<String>>,
        }
        let bytes = serde_json::to_vec(&Digestable {
            fields: &self.fields,
            scroll: &self.scroll,
            keyboard: self.keyboard,
            focused: &self.focused,
            app_state: &self.app_state,
        })
        .expect("state serializes");
        let digest = Sha256::digest(&bytes);
        StateId(format!("{}#{}", self.screen, &hex::encode(digest)[..12]))
    }
}

/// An element as currently shown, in screen coordinates.
#[derive(Debug, Clone)]
pub struct VisibleElement<'a> {
    pub kind: ElementKind,
    pub content: String,
    pub bbox: BBox,
    pub target: TapTarget<'a>,
}

#[derive(Debug, Clone)]
pub enum TapTarget<'a> {
    Effects(&'a [Effect]),
    Field(&'a str),
    Inert,
}

pub struct Simulator {
    spec: Arc<DeviceSpec>,
    state: SimState,
    snapshots: VecDeque<SimState>,
    perceptions: HashMap<StateId, PerceptionResult>,
    rasters: HashMap<StateId, Arc<[u8]>>,
}

impl Simulator {
    pub fn new(spec: Arc<DeviceSpec>) -> Self {
        let state = SimState {
            screen: spec.home.clone(),
            fields: BTreeMap::new(),
            scroll: BTreeMap::new(),
            keyboard: spec.screen(&spec.home).is_some_and(|s| s.keyboard_active),
            focused: None,
            app_state: BTreeMap::new(),
        };
        Simulator {
            spec,
            state,
            snapshots: VecDeque::new(),
            perceptions: HashMap::new(),
            rasters: HashMap::new(),
        }
    }

    pub fn spec(&self) -> &DeviceSpec {
        &self.spec
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn state_id(&self) -> StateId {
        self.state.state_id()
    }

    pub fn at_home(&self) -> bool {
        self.state.screen == self.spec.home
    }

    pub fn snapshot_depth(&self) -> usize {
        self.snapshots.len()
    }

    pub fn screenshot(&mut self) -> ScreenState {
        let id = self.state.state_id();
        if !self.perceptions.contains_key(&id) {
            let perception = self.perceive_state(&self.state);
            self.perceptions.insert(id.clone(), perception);
        }
        let image = match self.rasters.get(&id) {
            Some(img) => img.clone(),
            None => {
                let img: Arc<[u8]> = raster::render(&self.spec, &self.state, &self.visible(&self.state), &id).into();
                self.rasters.insert(id.clone(), img.clone());
                img
            }
        };
        ScreenState::new(image, self.spec.width, self.spec.height, id)
            .expect("device spec dimensions are positive")
    }

    pub fn execute(&mut self, op: &Operation) -> ExecutionReport {
        let before = self.state.state_id();
        let (next, note) = self.apply(&self.state, op);
        self.snapshots.push_back(std::mem::replace(&mut self.state, next));
        if self.snapshots.len() > SNAPSHOT_DEPTH {
            self.snapshots.pop_front();
        }
        let after = self.state.state_id();
        ExecutionReport {
            changed: before != after,
            state_id: Some(after),
            note,
            commands: Vec::new(),
        }
    }

    pub fn expected_effect(&self, op: &Operation) -> StateId {
        self.apply(&self.state, op).0.state_id()
    }

    pub fn revert_one(&mut self) -> Result<StateId, DeviceError> {
        let prev = self.snapshots.pop_back().ok_or(DeviceError::NothingToRevert)?;
        self.state = prev;
        Ok(self.state.state_id())
    }

    /// Perception of a screenshot this simulator produced.
    pub fn ground_truth_perception(&self, screen: &ScreenState) -> Result<PerceptionResult, DeviceError> {
        self.perceptions
            .get(screen.state_id())
            .cloned()
            .ok_or_else(|| DeviceError::UnknownState(screen.state_id().clone()))
    }

    /// Elements visible in `state`, tap targets included.
    pub fn visible<'a>(&'a self, state: &SimState) -> Vec<VisibleElement<'a>> {
        let Some(screen) = self.spec.screen(&state.screen) else {
            return Vec::new();
        };
        let (sx, sy) = state.scroll.get(&screen.id).copied().unwrap_or((0, 0));
        let mut out = Vec::new();
        for e in &screen.elements {
            let bbox = match &screen.scroll {
                Some(scroll) if !e.fixed => {
                    let shifted = shift(e.bbox, sx, sy);
                    match shifted {
                        Some(b) if inside(&b, &scroll.viewport) => b,
                        _ => continue,
                    }
                }
                _ => e.bbox,
            };
            out.push(VisibleElement {
                kind: e.kind,
                content: e.content.clone(),
                bbox,
                target: if e.on_tap.is_empty() {
                    TapTarget::Inert
                } else {
                    TapTarget::Effects(&e.on_tap)
                },
            });
        }
        for f in &screen.input_fields {
            let value = state.field(&f.id);
            out.push(VisibleElement {
                kind: ElementKind::Text,
                content: if value.is_empty() {
                    f.placeholder.clone()
                } else {
                    value.to_string()
                },
                bbox: f.bbox,
                target: TapTarget::Field(&f.id),
            });
        }
        for list in &screen.lists {
            for (row, value) in state
                .state_values(&list.key)
                .iter()
                .take(list.max_rows as usize)
                .enumerate()
            {
                let y1 = list.origin.1 + list.row_height * row as u32;
                out.push(VisibleElement {
                    kind: ElementKind::Text,
                    content: value.clone(),
                    bbox: BBox::new(list.origin.0, y1, list.origin.0 + list.row_width, y1 + list.row_height),
                    target: TapTarget::Inert,
                });
            }
        }
        out
    }

    fn perceive_state(&self, state: &SimState) -> PerceptionResult {
        let elements = self
            .visible(state)
            .into_iter()
            .filter(|v| !v.content.trim().is_empty())
            .map(|v| PerceptionElement::new(v.kind, v.content, v.bbox))
            .collect();
        PerceptionResult::new(elements, state.keyboard)
    }

    /// A point that hits no tap target on the current screen.
    pub fn blank_point(&self) -> Option<(u32, u32)> {
        let visible = self.visible(&self.state);
        let step = 40;
        (step / 2..self.spec.height)
            .step_by(step as usize)
            .flat_map(|y| (step / 2..self.spec.width).step_by(step as usize).map(move |x| (x, y)))
            .find(|&(x, y)| !visible.iter().any(|v| v.bbox.contains(x, y)))
    }

    /// Tap operations on visible targets, in display order.
    pub fn tap_targets(&self) -> Vec<(String, Operation)> {
        let mut v: Vec<_> = self
            .visible(&self.state)
            .into_iter()
            .filter(|v| !matches!(v.target, TapTarget::Inert))
            .map(|v| {
                let (x, y) = v.bbox.center();
                (v.content, Operation::tap(x, y))
            })
            .collect();
        v.sort_by_key(|(_, op)| match op {
            Operation::Tap { x, y } => (*y, *x),
            _ => (0, 0),
        });
        v
    }

    fn apply(&self, state: &SimState, op: &Operation) -> (SimState, Option<String>) {
        let mut next = state.clone();
        let note = match op {
            Operation::OpenApp { name } => {
                if state.screen != self.spec.home {
                    Some("open app ignored: not on the home screen".to_string())
                } else if let Some(entry) = self.spec.apps.get(name) {
                    if !self.spec.preserve_app_state {
                        self.clear_app_fields(&mut next, name);
                    }
                    self.goto(&mut next, entry);
                    None
                } else {
                    Some(format!("no app named {name:?}"))
                }
            }
            Operation::Tap { x, y } => self.tap(&mut next, *x, *y),
            Operation::Swipe { x1, y1, x2, y2 } => self.swipe(&mut next, (*x1, *y1), (*x2, *y2)),
            Operation::Type { text } => match (&state.focused, state.keyboard) {
                (Some(field), true) => {
                    next.fields.entry(field.clone()).or_default().push_str(text);
                    None
                }
                _ => Some("type ignored: keyboard not active".to_string()),
            },
            Operation::Home => {
                let home = self.spec.home.clone();
                self.goto(&mut next, &home);
                None
            }
            Operation::Stop => None,
        };
        (next, note)
    }

    fn goto(&self, state: &mut SimState, screen_id: &str) {
        state.screen = screen_id.to_string();
        state.scroll.remove(screen_id);
        let screen = self.spec.screen(screen_id);
        state.keyboard = screen.is_some_and(|s| s.keyboard_active);
        state.focused = if state.keyboard {
            screen.and_then(|s| s.input_fields.first()).map(|f| f.id.clone())
        } else {
            None
        };
    }

    fn clear_app_fields(&self, state: &mut SimState, app: &str) {
        for s in self.spec.screens.iter().filter(|s| s.app.as_deref() == Some(app)) {
            for f in &s.input_fields {
                state.fields.remove(&f.id);
            }
        }
    }

    fn tap(&self, state: &mut SimState, x: u32, y: u32) -> Option<String> {
        let visible = self.visible(state);
        let hit = visible
            .iter()
            .filter(|v| !matches!(v.target, TapTarget::Inert))
            .find(|v| v.bbox.contains(x, y));
        let Some(hit) = hit else {
            return Some("tap on blank space".into());
        };
        match &hit.target {
            TapTarget::Field(id) => {
                state.focused = Some((*id).to_string());
                state.keyboard = true;
                None
            }
            TapTarget::Effects(effects) => {
                let effects = effects.to_vec();
                for effect in &effects {
                    self.run_effect(state, effect);
                }
                None
            }
            TapTarget::Inert => unreachable!(),
        }
    }

    fn run_effect(&self, state: &mut SimState, effect: &Effect) {
        match effect {
            Effect::Goto(screen) => self.goto(state, screen),
            Effect::SetField { field, value } => {
                let v = expand(value, state);
                state.fields.insert(field.clone(), v);
            }
            Effect::ToggleKeyboard => {
                state.keyboard = !state.keyboard;
                if !state.keyboard {
                    state.focused = None;
                }
            }
            Effect::AppendState { key, value } => {
                let v = expand(value, state);
                state.app_state.entry(key.clone()).or_default().push(v);
            }
            Effect::SetState { key, value } => {
                let v = expand(value, state);
                state.app_state.insert(key.clone(), vec![v]);
            }
            Effect::None => {}
        }
    }

    fn swipe(&self, state: &mut SimState, from: (u32, u32), to: (u32, u32)) -> Option<String> {
        let Some(screen) = self.spec.screen(&state.screen) else {
            return Some("unknown screen".into());
        };
        let Some(scroll) = &screen.scroll else {
            return Some("screen does not scroll".into());
        };
        let dx = i64::from(to.0) - i64::from(from.0);
        let dy = i64::from(to.1) - i64::from(from.1);
        let (mut sx, mut sy) = state.scroll.get(&screen.id).copied().unwrap_or((0, 0));
        // Content follows the finger: swiping up reveals content further down.
        if dy.abs() > dx.abs() {
            sy = (i64::from(sy) - dy).clamp(0, i64::from(scroll.max_y)) as u32;
        } else {
            sx = (i64::from(sx) - dx).clamp(0, i64::from(scroll.max_x)) as u32;
        }
        if (sx, sy) == (0, 0) {
            state.scroll.remove(&screen.id);
        } else {
            state.scroll.insert(screen.id.clone(), (sx, sy));
        }
        None
    }
}

fn shift(b: BBox, sx: u32, sy: u32) -> Option<BBox> {
    Some(BBox::new(
        b.x1.checked_sub(sx)?,
        b.y1.checked_sub(sy)?,
        b.x2.checked_sub(sx)?,
        b.y2.checked_sub(sy)?,
    ))
}

fn inside(b: &BBox, outer: &BBox) -> bool {
    b.x1 >= outer.x1 && b.y1 >= outer.y1 && b.x2 <= outer.x2 && b.y2 <= outer.y2
}

fn expand(value: &str, state: &SimState) -> String {
    let mut out = String::new();
    let mut rest = value;
    while let Some(pos) = rest.find("{field:") {
        out.push_str(&rest[..pos]);
        let after = &rest[pos + "{field:".len()..];
        match after.split_once('}') {
            Some((id, tail)) => {
                out.push_str(state.field(id));
                rest = tail;
            }
            None => {
                out.push_str(&rest[pos..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Shared handle to one simulator; acts as both device and perception.
///
/// Clones share the same simulator, so a scripted backend can observe the
/// world the orchestrator drives.
#[derive(Clone)]
pub struct SimHandle(Arc<Mutex<Simulator>>);

impl SimHandle {
    pub fn new(spec: Arc<DeviceSpec>) -> Self {
        SimHandle(Arc::new(Mutex::new(Simulator::new(spec))))
    }

    pub fn lock(&self) -> MutexGuard<'_, Simulator> {
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Device for SimHandle {
    fn screenshot(&mut self) -> Result<ScreenState, DeviceError> {
        Ok(self.lock().screenshot())
    }

    fn execute(&mut self, op: &Operation) -> Result<ExecutionReport, DeviceError> {
        Ok(self.lock().execute(op))
    }

    fn revert_one(&mut self) -> Result<StateId, DeviceError> {
        self.lock().revert_one()
    }

    fn at_home(&mut self) -> Result<bool, DeviceError> {
        Ok(self.lock().at_home())
    }

    fn keyboard_active(&mut self) -> Result<Option<bool>, DeviceError> {
        Ok(Some(self.lock().state().keyboard))
    }

    fn expected_effect(&mut self, op: &Operation) -> Result<Option<StateId>, DeviceError> {
        Ok(Some(self.lock().expected_effect(op)))
    }

    fn rollback_mechanism(&self) -> RollbackMechanism {
        RollbackMechanism::Snapshot
    }
}

impl Perceiver for SimHandle {
    fn perceive(&self, screen: &ScreenState) -> Result<PerceptionResult, PerceptionError> {
        self.lock()
            .ground_truth_perception(screen)
            .map_err(|e| PerceptionError::ServiceUnavailable(e.to_string()))
    }
}
