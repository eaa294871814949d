//! Text-zone detection through a pluggable OCR backend.
//!
//! Wire format for external OCR: the request body is PNG bytes, the response
//! is plain text with one box per line, `x y w h confidence content`, where
//! `content` runs to the end of the line.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backend::{clip_box, BackendError, HttpEndpoint};
use crate::ingest::ChartImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub content: String,
    pub confidence: f64,
}

/// A box as reported by a backend, before clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTextBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
    pub confidence: f64,
    pub content: String,
}

impl RawTextBox {
    pub fn new(x: i64, y: i64, w: i64, h: i64, content: &str) -> Self {
        Self {
            x,
            y,
            w,
            h,
            confidence: 1.0,
            content: content.to_string(),
        }
    }
}

pub trait OcrBackend: Send + Sync {
    fn id(&self) -> &str;
    fn detect(&self, img: &ChartImage) -> Result<Vec<RawTextBox>, BackendError>;
}

/// Runs OCR and clips every box to the image. Boxes entirely outside the
/// image are dropped.
pub fn detect_text_boxes(img: &ChartImage, backend: &dyn OcrBackend) -> Result<Vec<TextBox>, BackendError> {
    let raw = backend.detect(img)?;
    Ok(raw
        .into_iter()
        .filter_map(|b| {
            let [x, y, w, h] = clip_box(b.x, b.y, b.w, b.h, img.width(), img.height())?;
            Some(TextBox {
                x,
                y,
                w,
                h,
                content: b.content,
                confidence: b.confidence.clamp(0.0, 1.0),
            })
        })
        .collect())
}

/// True when at least one box holds a letter or digit.
pub fn has_text(boxes: &[TextBox]) -> bool {
    boxes
        .iter()
        .any(|b| b.content.trim().chars().any(char::is_alphanumeric))
}

pub fn parse_ocr_response(body: &str, backend_id: &str) -> Result<Vec<RawTextBox>, BackendError> {
    let mut out = Vec::new();
    for (n, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.trim_start().splitn(6, ' ');
        let mut field = |name: &str| {
            parts
                .next()
                .ok_or_else(|| BackendError::new(backend_id, format!("line {}: missing {name}", n + 1)))
        };
        let int = |s: &str, name: &str| {
            s.parse::<i64>()
                .map_err(|_| BackendError::new(backend_id, format!("line {}: bad {name} `{s}`", n + 1)))
        };
        let x = int(field("x")?, "x")?;
        let y = int(field("y")?, "y")?;
        let w = int(field("w")?, "w")?;
        let h = int(field("h")?, "h")?;
        let c = field("confidence")?;
        let confidence = c
            .parse::<f64>()
            .map_err(|_| BackendError::new(backend_id, format!("line {}: bad confidence `{c}`", n + 1)))?;
        let content = parts.next().unwrap_or("").to_string();
        out.push(RawTextBox {
            x,
            y,
            w,
            h,
            confidence,
            content,
        });
    }
    Ok(out)
}

pub fn format_ocr_response(boxes: &[RawTextBox]) -> String {
    boxes
        .iter()
        .map(|b| format!("{} {} {} {} {} {}\n", b.x, b.y, b.w, b.h, b.confidence, b.content))
        .collect()
}

/// OCR stub returning canned boxes keyed by image digest. Unknown images get
/// no boxes.
#[derive(Debug, Clone, Default)]
pub struct FixtureOcr {
    by_digest: HashMap<String, Vec<RawTextBox>>,
    fail: bool,
}

impl FixtureOcr {
    pub fn new() -> Self {
        Self::default()
    }

    /// A stub whose every call fails, for exercising error paths.
    pub fn failing() -> Self {
        Self {
            by_digest: HashMap::new(),
            fail: true,
        }
    }

    pub fn with_boxes(mut self, img: &ChartImage, boxes: Vec<RawTextBox>) -> Self {
        self.insert(img, boxes);
        self
    }

    pub fn insert(&mut self, img: &ChartImage, boxes: Vec<RawTextBox>) {
        self.by_digest.insert(img.content_digest(), boxes);
    }

    /// Registers a response for the image with the given content digest.
    pub fn insert_digest(&mut self, digest: impl Into<String>, boxes: Vec<RawTextBox>) {
        self.by_digest.insert(digest.into(), boxes);
    }
}

impl OcrBackend for FixtureOcr {
    fn id(&self) -> &str {
        "fixture-ocr"
    }

    fn detect(&self, img: &ChartImage) -> Result<Vec<RawTextBox>, BackendError> {
        if self.fail {
            return Err(BackendError::new(self.id(), "configured to fail"));
        }
        Ok(self.by_digest.get(&img.content_digest()).cloned().unwrap_or_default())
    }
}

#[derive(Debug, Clone)]
pub struct HttpOcrBackend {
    endpoint: HttpEndpoint,
    id: String,
}

impl HttpOcrBackend {
    pub fn new(url: &str, timeout: Duration) -> Self {
        Self {
            endpoint: HttpEndpoint::new(url, timeout),
            id: format!("http-ocr:{url}"),
        }
    }
}

impl OcrBackend for HttpOcrBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn detect(&self, img: &ChartImage) -> Result<Vec<RawTextBox>, BackendError> {
        let body = self.endpoint.post_text(&self.id, "image/png", &img.to_png_bytes())?;
        parse_ocr_response(&body, &self.id)
    }
}
