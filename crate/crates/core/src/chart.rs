//! Chart-to-table extraction, title detection, chart-type recommendation
//! input and chartjunk detection.
//!
//! Wire formats:
//! * chart-to-table: PNG in; response is a title line (possibly empty)
//!   followed by a tab-separated table whose first row is the header.
//! * object detection: PNG in; one detection per line,
//!   `label x y w h confidence`.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backend::{clip_box, BackendError, HttpEndpoint};
use crate::ingest::ChartImage;

/// Perceptual ranking of visual encodings used as design knowledge for the
/// chart-type suggestion.
pub const APT_RANKING_PREAMBLE: &str = include_str!("../content/apt_ranking.txt");

pub const DEFAULT_DETECTION_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChartTable {
    pub title: Option<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub extraction_ok: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ChartTable {
    /// The empty table reported when extraction fails.
    pub fn unextractable() -> Self {
        Self::default()
    }

    /// Builds an extracted table, normalizing ragged rows.
    pub fn new(title: Option<&str>, columns: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        let mut table = Self {
            title: title.map(str::to_string),
            columns,
            rows,
            extraction_ok: true,
            warnings: Vec::new(),
        };
        table.normalize();
        table
    }

    fn normalize(&mut self) {
        let width = self.columns.len();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if row.len() < width {
                self.warnings
                    .push(format!("row {} had {} cells, padded to {width}", i + 1, row.len()));
                row.resize(width, String::new());
            } else if row.len() > width {
                self.warnings
                    .push(format!("row {} had {} cells, truncated to {width}", i + 1, row.len()));
                row.truncate(width);
            }
        }
    }

    /// Tab-separated rendering: header line, then one line per row.
    pub fn to_tsv(&self) -> String {
        let mut out = self.columns.join("\t");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }

    /// Serializes in the chart-to-table wire format.
    pub fn to_wire(&self) -> String {
        if !self.extraction_ok {
            return String::new();
        }
        format!("{}\n{}", self.title.as_deref().unwrap_or(""), self.to_tsv())
    }
}

/// Parses a chart-to-table response. A body without a usable header row is
/// an unextractable chart, not an error.
pub fn parse_chart_table(body: &str) -> ChartTable {
    let mut lines = body.lines();
    let title = lines.next().map(str::trim).filter(|t| !t.is_empty());
    let header = match lines.next() {
        Some(h) if h.split('\t').any(|c| !c.trim().is_empty()) => h,
        _ => return ChartTable::unextractable(),
    };
    let columns = header.split('\t').map(|c| c.trim().to_string()).collect();
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split('\t').map(|c| c.trim().to_string()).collect())
        .collect();
    ChartTable::new(title, columns, rows)
}

pub trait ChartTableBackend: Send + Sync {
    fn id(&self) -> &str;
    fn extract(&self, img: &ChartImage) -> Result<ChartTable, BackendError>;
}

pub fn extract_chart_table(img: &ChartImage, backend: &dyn ChartTableBackend) -> Result<ChartTable, BackendError> {
    let mut table = backend.extract(img)?;
    if table.extraction_ok {
        table.normalize();
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleFinding {
    pub present: bool,
}

pub fn detect_title(table: &ChartTable) -> TitleFinding {
    TitleFinding {
        present: table.title.as_deref().is_some_and(|t| !t.trim().is_empty()),
    }
}

/// Prompt fragment pairing the ranking preamble with the extracted table, or
/// `None` when there is no data to recommend a chart for.
pub fn assemble_chart_recommendation_input(table: &ChartTable, ranking_preamble: &str) -> Option<String> {
    if !table.extraction_ok || table.rows.is_empty() {
        return None;
    }
    let mut out = String::from(ranking_preamble.trim_end());
    out.push_str("\n\nData table extracted from the chart");
    if let Some(title) = table.title.as_deref().filter(|t| !t.trim().is_empty()) {
        out.push_str(&format!(" \"{}\"", title.trim()));
    }
    out.push_str(":\n");
    out.push_str(&table.to_tsv());
    Some(out.trim_end().to_string())
}

/// Chart-to-table stub keyed by image digest; unknown images are
/// unextractable.
#[derive(Debug, Clone, Default)]
pub struct FixtureChartTable {
    by_digest: HashMap<String, ChartTable>,
}

impl FixtureChartTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_table(mut self, img: &ChartImage, table: ChartTable) -> Self {
        self.insert(img, table);
        self
    }

    pub fn insert(&mut self, img: &ChartImage, table: ChartTable) {
        self.by_digest.insert(img.content_digest(), table);
    }

    /// Registers a response for the image with the given content digest.
    pub fn insert_digest(&mut self, digest: impl Into<String>, table: ChartTable) {
        self.by_digest.insert(digest.into(), table);
    }
}

impl ChartTableBackend for FixtureChartTable {
    fn id(&self) -> &str {
        "fixture-chart-table"
    }

    fn extract(&self, img: &ChartImage) -> Result<ChartTable, BackendError> {
        Ok(self
            .by_digest
            .get(&img.content_digest())
            .cloned()
            .unwrap_or_else(ChartTable::unextractable))
    }
}

#[derive(Debug, Clone)]
pub struct HttpChartTableBackend {
    endpoint: HttpEndpoint,
    id: String,
}

impl HttpChartTableBackend {
    pub fn new(url: &str, timeout: Duration) -> Self {
        Self {
            endpoint: HttpEndpoint::new(url, timeout),
            id: format!("http-chart-table:{url}"),
        }
    }
}

impl ChartTableBackend for HttpChartTableBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn extract(&self, img: &ChartImage) -> Result<ChartTable, BackendError> {
        let body = self.endpoint.post_text(&self.id, "image/png", &img.to_png_bytes())?;
        Ok(parse_chart_table(&body))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub label: String,
    /// `[x, y, w, h]` in pixels.
    pub bbox: [u32; 4],
    pub confidence: f64,
}

/// A detection as reported by the backend, before clipping and filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDetection {
    pub label: String,
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
    pub confidence: f64,
}

impl RawDetection {
    pub fn new(label: &str, bbox: [i64; 4], confidence: f64) -> Self {
        Self {
            label: label.to_string(),
            x: bbox[0],
            y: bbox[1],
            w: bbox[2],
            h: bbox[3],
            confidence,
        }
    }
}

pub fn parse_detections(body: &str, backend_id: &str) -> Result<Vec<RawDetection>, BackendError> {
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || {
                BackendError::new(
                    backend_id,
                    format!("line {}: expected `label x y w h confidence`", n + 1),
                )
            };
            if parts.len() != 6 {
                return Err(bad());
            }
            let int = |s: &str| s.parse::<i64>().map_err(|_| bad());
            Ok(RawDetection {
                label: parts[0].to_string(),
                x: int(parts[1])?,
                y: int(parts[2])?,
                w: int(parts[3])?,
                h: int(parts[4])?,
                confidence: parts[5].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn format_detections(detections: &[RawDetection]) -> String {
    detections
        .iter()
        .map(|d| format!("{} {} {} {} {} {}\n", d.label, d.x, d.y, d.w, d.h, d.confidence))
        .collect()
}

pub trait ObjectDetector: Send + Sync {
    fn id(&self) -> &str;
    fn detect(&self, img: &ChartImage) -> Result<Vec<RawDetection>, BackendError>;
}

/// Detections at or above `confidence_floor`, clipped to the image. Any
/// remaining detection counts as chartjunk.
pub fn detect_chartjunk(
    img: &ChartImage,
    backend: &dyn ObjectDetector,
    confidence_floor: f64,
) -> Result<Vec<DetectedObject>, BackendError> {
    Ok(backend
        .detect(img)?
        .into_iter()
        .filter(|d| d.confidence >= confidence_floor)
        .filter_map(|d| {
            let bbox = clip_box(d.x, d.y, d.w, d.h, img.width(), img.height())?;
            Some(DetectedObject {
                label: d.label,
                bbox,
                confidence: d.confidence.clamp(0.0, 1.0),
            })
        })
        .collect())
}

/// Detector stub keyed by image digest; unknown images yield no detections.
#[derive(Debug, Clone, Default)]
pub struct FixtureDetector {
    by_digest: HashMap<String, Vec<RawDetection>>,
}

impl FixtureDetector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_detections(mut self, img: &ChartImage, detections: Vec<RawDetection>) -> Self {
        self.insert(img, detections);
        self
    }

    pub fn insert(&mut self, img: &ChartImage, detections: Vec<RawDetection>) {
        self.by_digest.insert(img.content_digest(), detections);
    }

    /// Registers a response for the image with the given content digest.
    pub fn insert_digest(&mut self, digest: impl Into<String>, detections: Vec<RawDetection>) {
        self.by_digest.insert(digest.into(), detections);
    }
}

impl ObjectDetector for FixtureDetector {
    fn id(&self) -> &str {
        "fixture-detector"
    }

    fn detect(&self, img: &ChartImage) -> Result<Vec<RawDetection>, BackendError> {
        Ok(self.by_digest.get(&img.content_digest()).cloned().unwrap_or_default())
    }
}

#[derive(Debug, Clone)]
pub struct HttpObjectDetector {
    endpoint: HttpEndpoint,
    id: String,
}

impl HttpObjectDetector {
    pub fn new(url: &str, timeout: Duration) -> Self {
        Self {
            endpoint: HttpEndpoint::new(url, timeout),
            id: format!("http-detector:{url}"),
        }
    }
}

impl ObjectDetector for HttpObjectDetector {
    fn id(&self) -> &str {
        &self.id
    }

    fn detect(&self, img: &ChartImage) -> Result<Vec<RawDetection>, BackendError> {
        let body = self.endpoint.post_text(&self.id, "image/png", &img.to_png_bytes())?;
        parse_detections(&body, &self.id)
    }
}
