//! Screenshot perception: located text/icon elements plus keyboard status.
//!
//! Two sources implement [`Perceiver`]: the simulator's ground truth
//! ([`crate::sim::SimHandle`]) and [`RemotePerception`], a client for the
//! `/perceive` HTTP service.
//!
//! Wire contract:
//!
//! ```text
//! POST /perceive   {"image_b64": str, "locale": "en"|"zh"}
//! 200              {"elements": [{"kind": "text"|"icon", "content": str,
//!                                 "bbox": [x1,y1,x2,y2], "center": [x,y]}],
//!                   "keyboard_active": bool, "latency_ms": int}
//! 4xx/5xx          {"error": str}
//! ```

use std::collections::HashMap;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retry::RetryPolicy;
use crate::types::{
    sort_elements, BBox, ElementKind, Locale, PerceptionElement, PerceptionResult, ScreenState,
    StateId,
};

/// Elements with the same content whose boxes overlap more than this are merged.
pub const DEDUP_IOU: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PerceptionError {
    #[error("perception service unavailable: {0}")]
    ServiceUnavailable(String),
    #[error("perception response violates the schema: {0}")]
    SchemaViolation(String),
    #[error("perception service rejected the request ({status}): {message}")]
    Rejected { status: u16, message: String },
}

pub trait Perceiver: Send + Sync {
    fn perceive(&self, screen: &ScreenState) -> Result<PerceptionResult, PerceptionError>;
}

impl<P: Perceiver + ?Sized> Perceiver for std::sync::Arc<P> {
    fn perceive(&self, screen: &ScreenState) -> Result<PerceptionResult, PerceptionError> {
        (**self).perceive(screen)
    }
}

/// Per-task cache keyed by state id, so a screen seen as "after" is not
/// perceived again as the next "before".
pub struct CachedPerception<'a> {
    inner: &'a dyn Perceiver,
    cache: HashMap<StateId, PerceptionResult>,
    calls: usize,
}

impl<'a> CachedPerception<'a> {
    pub fn new(inner: &'a dyn Perceiver) -> Self {
        CachedPerception {
            inner,
            cache: HashMap::new(),
            calls: 0,
        }
    }

    pub fn perceive(&mut self, screen: &ScreenState) -> Result<PerceptionResult, PerceptionError> {
        if let Some(hit) = self.cache.get(screen.state_id()) {
            return Ok(hit.clone());
        }
        self.calls += 1;
        let result = self.inner.perceive(screen)?;
        self.cache.insert(screen.state_id().clone(), result.clone());
        Ok(result)
    }

    /// Number of calls that reached the underlying perceiver.
    pub fn backend_calls(&self) -> usize {
        self.calls
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceiveRequest {
    pub image_b64: String,
    pub locale: Locale,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireElement {
    pub kind: String,
    pub content: String,
    pub bbox: [i64; 4],
    pub center: [i64; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceiveResponse {
    pub elements: Vec<WireElement>,
    pub keyboard_active: bool,
    pub latency_ms: u64,
}

#[derive(Debug, Deserialize)]
struct ErrorBody {
    error: String,
}

/// Checks every element invariant against the image size, then merges
/// duplicates and sorts.
pub fn validate_response(
    resp: &PerceiveResponse,
    width: u32,
    height: u32,
) -> Result<PerceptionResult, PerceptionError> {
    let bad = |i: usize, m: String| Err(PerceptionError::SchemaViolation(format!("element {i}: {m}")));
    let mut elements = Vec::with_capacity(resp.elements.len());
    for (i, e) in resp.elements.iter().enumerate() {
        let kind = match e.kind.as_str() {
            "text" => ElementKind::Text,
            "icon" => ElementKind::Icon,
            other => return bad(i, format!("unknown kind {other:?}")),
        };
        if e.content.trim().is_empty() {
            return bad(i, "empty content".into());
        }
        let [x1, y1, x2, y2] = e.bbox;
        if x1 < 0 || y1 < 0 || x2 <= x1 || y2 <= y1 || x2 > i64::from(width) || y2 > i64::from(height) {
            return bad(i, format!("bbox {:?} outside the {width}x{height} image", e.bbox));
        }
        let [cx, cy] = e.center;
        if cx < x1 || cx >= x2 || cy < y1 || cy >= y2 {
            return bad(i, format!("center {:?} not inside bbox {:?}", e.center, e.bbox));
        }
        elements.push(PerceptionElement {
            kind,
            content: e.content.clone(),
            center: (cx as u32, cy as u32),
            bbox: BBox::new(x1 as u32, y1 as u32, x2 as u32, y2 as u32),
        });
    }
    let mut merged = dedup(elements);
    sort_elements(&mut merged);
    Ok(PerceptionResult {
        elements: merged,
        keyboard_active: resp.keyboard_active,
    })
}

/// Merges same-content elements whose boxes overlap with IoU above [`DEDUP_IOU`].
pub fn dedup(elements: Vec<PerceptionElement>) -> Vec<PerceptionElement> {
    let mut out: Vec<PerceptionElement> = Vec::with_capacity(elements.len());
    for e in elements {
        match out
            .iter_mut()
            .find(|k| k.content == e.content && k.bbox.iou(&e.bbox) > DEDUP_IOU)
        {
            Some(kept) => {
                let b = BBox::new(
                    kept.bbox.x1.min(e.bbox.x1),
                    kept.bbox.y1.min(e.bbox.y1),
                    kept.bbox.x2.max(e.bbox.x2),
                    kept.bbox.y2.max(e.bbox.y2),
                );
                kept.bbox = b;
                kept.center = b.center();
            }
            None => out.push(e),
        }
    }
    out
}

/// Width and height from a PNG IHDR chunk.
pub fn png_dimensions(bytes: &[u8]) -> Option<(u32, u32)> {
    if bytes.len() < 24 || &bytes[..8] != b"\x89PNG\r\n\x1a\n" || &bytes[12..16] != b"IHDR" {
        return None;
    }
    let w = u32::from_be_bytes(bytes[16..20].try_into().ok()?);
    let h = u32::from_be_bytes(bytes[20..24].try_into().ok()?);
    Some((w, h))
}

fn rescale(result: PerceptionResult, from: (u32, u32), to: (u32, u32)) -> PerceptionResult {
    if from == to {
        return result;
    }
    let sx = |v: u32| ((u64::from(v) * u64::from(to.0)) / u64::from(from.0)) as u32;
    let sy = |v: u32| ((u64::from(v) * u64::from(to.1)) / u64::from(from.1)) as u32;
    let elements = result
        .elements
        .into_iter()
        .map(|e| {
            let bbox = BBox::new(sx(e.bbox.x1), sy(e.bbox.y1), sx(e.bbox.x2), sy(e.bbox.y2));
            PerceptionElement {
                kind: e.kind,
                content: e.content,
                center: bbox.center(),
                bbox,
            }
        })
        .collect();
    PerceptionResult::new(elements, result.keyboard_active)
}

/// Client for the remote perception service.
pub struct RemotePerception {
    base_url: String,
    locale: Locale,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl RemotePerception {
    pub fn new(base_url: impl Into<String>, locale: Locale) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        RemotePerception {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            locale,
            agent,
            retry: RetryPolicy::default(),
        }
    }

    /// Reads `PERCEPTION_URL`.
    pub fn from_env(locale: Locale) -> Result<Self, PerceptionError> {
        std::env::var("PERCEPTION_URL")
            .map(|u| Self::new(u, locale))
            .map_err(|_| PerceptionError::ServiceUnavailable("PERCEPTION_URL is not set".into()))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn call(&self, req: &PerceiveRequest) -> Result<PerceiveResponse, (PerceptionError, bool)> {
        let url = format!("{}/perceive", self.base_url);
        let mut resp = self
            .agent
            .post(&url)
            .send_json(req)
            .map_err(|e| (PerceptionError::ServiceUnavailable(e.to_string()), true))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| (PerceptionError::ServiceUnavailable(e.to_string()), true))?;
        if status >= 500 {
            return Err((PerceptionError::ServiceUnavailable(error_message(status, &body)), true));
        }
        if status >= 400 {
            return Err((
                PerceptionError::Rejected {
                    status,
                    message: error_message(status, &body),
                },
                false,
            ));
        }
        serde_json::from_str(&body)
            .map_err(|e| (PerceptionError::SchemaViolation(e.to_string()), false))
    }
}

fn error_message(status: u16, body: &str) -> String {
    serde_json::from_str::<ErrorBody>(body)
        .map(|b| b.error)
        .unwrap_or_else(|_| format!("HTTP {status}"))
}

impl Perceiver for RemotePerception {
    fn perceive(&self, screen: &ScreenState) -> Result<PerceptionResult, PerceptionError> {
        if screen.image().is_empty() {
            return Err(PerceptionError::SchemaViolation("empty screenshot".into()));
        }
        let req = PerceiveRequest {
            image_b64: base64::engine::general_purpose::STANDARD.encode(screen.image()),
            locale: self.locale,
        };
        let resp = self.retry.run(|_| self.call(&req))?;
        let device = (screen.width(), screen.height());
        let image = png_dimensions(screen.image()).unwrap_or(device);
        let result = validate_response(&resp, image.0, image.1)?;
        Ok(rescale(result, image, device))
    }
}
