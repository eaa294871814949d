//! Seeded synthetic charts with ground-truth text boxes, tables and
//! decorations. Used as test fixtures and as the corpus for the bundled
//! reference distributions.

use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chart::{format_detections, ChartTable, RawDetection};
use crate::color::{cvd_safe_palettes, group_colors, quantize_palette};
use crate::config::ClarifyConfig;
use crate::ingest::{downsample_for_analysis, ChartImage};
use crate::saliency::{
    compute_saliency, ReferenceDistribution, ReferenceSet, SaliencyBackend, SaliencyMetrics, SpectralResidual,
};
use crate::setup::fixture_digest;
use crate::text::{detect_text_boxes, format_ocr_response, FixtureOcr, RawTextBox};

/// Seeds and size of the corpus behind the bundled reference file.
pub const REFERENCE_CORPUS_SEEDS: std::ops::Range<u64> = 0..60;
pub const REFERENCE_CORPUS_SIZE: (u32, u32) = (320, 240);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Bar,
    Line,
    Scatter,
}

impl SynthKind {
    pub const ALL: [SynthKind; 3] = [SynthKind::Bar, SynthKind::Line, SynthKind::Scatter];
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub width: u32,
    pub height: u32,
    pub kind: SynthKind,
    pub series: usize,
    pub points: usize,
    pub title: bool,
    /// Adds a decorative star that the fixture detector reports.
    pub embellishment: bool,
    /// Uses pure red and green for the first two series.
    pub red_green: bool,
}

impl SynthSpec {
    pub fn bar(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            kind: SynthKind::Bar,
            series: 1,
            points: 6,
            title: true,
            embellishment: false,
            red_green: false,
        }
    }

    /// A varied spec drawn from `seed`.
    pub fn random(seed: u64, width: u32, height: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
        Self {
            width,
            height,
            kind: SynthKind::ALL[rng.random_range(0..3)],
            series: rng.random_range(1..=4),
            points: rng.random_range(3..=10),
            title: rng.random_bool(0.7),
            embellishment: rng.random_bool(0.2),
            red_green: rng.random_bool(0.15),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthChart {
    pub image: ChartImage,
    pub text_boxes: Vec<RawTextBox>,
    pub table: ChartTable,
    pub detections: Vec<RawDetection>,
}

impl SynthChart {
    /// Writes the chart's OCR, table and detection responses as fixture
    /// files into `dir` and returns the digest they are keyed on. Box
    /// coordinates refer to the full image, so the chart must not exceed
    /// `analysis_max_dim`.
    pub fn write_fixtures(&self, dir: &Path, analysis_max_dim: u32) -> io::Result<String> {
        if self.image.width().max(self.image.height()) > analysis_max_dim {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("synthetic charts with fixtures are limited to {analysis_max_dim} px"),
            ));
        }
        let digest = fixture_digest(&self.image, analysis_max_dim);
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{digest}.ocr")), format_ocr_response(&self.text_boxes))?;
        std::fs::write(dir.join(format!("{digest}.table")), self.table.to_wire())?;
        std::fs::write(
            dir.join(format!("{digest}.detections")),
            format_detections(&self.detections),
        )?;
        Ok(digest)
    }
}

const BACKGROUND: [u8; 3] = [255, 255, 255];
const INK: [u8; 3] = [40, 40, 40];
const AXIS: [u8; 3] = [90, 90, 90];

struct Canvas {
    w: u32,
    h: u32,
    px: Vec<[u8; 3]>,
}

impl Canvas {
    fn rect(&mut self, x: i64, y: i64, w: i64, h: i64, c: [u8; 3]) {
        let x0 = x.max(0) as u32;
        let y0 = y.max(0) as u32;
        let x1 = (x + w).clamp(0, self.w as i64) as u32;
        let y1 = (y + h).clamp(0, self.h as i64) as u32;
        for yy in y0..y1 {
            for xx in x0..x1 {
                self.px[(yy * self.w + xx) as usize] = c;
            }
        }
    }

    fn disc(&mut self, cx: i64, cy: i64, r: i64, c: [u8; 3]) {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    self.rect(cx + dx, cy + dy, 1, 1, c);
                }
            }
        }
    }

    fn line(&mut self, a: (i64, i64), b: (i64, i64), thick: i64, c: [u8; 3]) {
        let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).max(1);
        for i in 0..=steps {
            let x = a.0 + (b.0 - a.0) * i / steps;
            let y = a.1 + (b.1 - a.1) * i / steps;
            self.rect(x - thick / 2, y - thick / 2, thick, thick, c);
        }
    }

    /// Glyph-like blocks standing in for a word, returning its box.
    fn text(&mut self, x: i64, y: i64, chars: usize, size: i64, content: &str) -> RawTextBox {
        let advance = size * 3 / 4;
        for i in 0..chars as i64 {
            let gx = x + i * advance;
            self.rect(gx, y, (advance - 2).max(1), size, INK);
            self.rect(
                gx + 1,
                y + size / 3,
                (advance - 4).max(1),
                (size / 3).max(1),
                BACKGROUND,
            );
        }
        RawTextBox::new(x, y, advance * chars as i64, size, content)
    }
}

fn series_colors(spec: &SynthSpec) -> Vec<[u8; 3]> {
    if spec.red_green {
        let mut c = vec![[255, 0, 0], [0, 200, 0]];
        c.extend([[0, 0, 255], [255, 160, 0]]);
        return c;
    }
    cvd_safe_palettes()
        .into_iter()
        .find(|p| p.name == "okabe-ito")
        .expect("bundled palette")
        .colors
        .into_iter()
        .filter(|c| *c != [0, 0, 0])
        .collect()
}

/// Draws a chart. The same spec and seed always produce the same pixels.
pub fn generate(spec: &SynthSpec, seed: u64) -> SynthChart {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (spec.width as i64, spec.height as i64);
    let mut cv = Canvas {
        w: spec.width,
        h: spec.height,
        px: vec![BACKGROUND; (spec.width * spec.height) as usize],
    };
    let mut boxes = Vec::new();
    let text_size = (h / 24).max(6);

    let top = if spec.title { text_size * 3 } else { text_size };
    let left = text_size * 4;
    let bottom = h - text_size * 3;
    let right = w - text_size;
    if spec.title {
        let chars = 12.min(((w - 2 * left) / (text_size * 3 / 4)).max(1) as usize);
        let tx = (w - chars as i64 * text_size * 3 / 4) / 2;
        boxes.push(cv.text(tx, text_size, chars, text_size, "Synthetic chart"));
    }

    cv.rect(left, top, 2, bottom - top, AXIS);
    cv.rect(left, bottom, right - left, 2, AXIS);

    let colors = series_colors(spec);
    let series = spec.series.min(colors.len());
    let values: Vec<Vec<u32>> = (0..series)
        .map(|_| (0..spec.points).map(|_| rng.random_range(10..=100)).collect())
        .collect();
    let plot_w = right - left - 4;
    let plot_h = bottom - top - 4;
    let slot = plot_w / spec.points as i64;
    let y_of = |v: u32| bottom - (plot_h * v as i64) / 100;
    let x_of = |i: usize| left + 4 + slot * i as i64 + slot / 2;

    for (s, vals) in values.iter().enumerate() {
        let c = colors[s];
        match spec.kind {
            SynthKind::Bar => {
                let bw = (slot * 3 / 4 / series as i64).max(1);
                for (i, &v) in vals.iter().enumerate() {
                    let x = left + 4 + slot * i as i64 + slot / 8 + bw * s as i64;
                    cv.rect(x, y_of(v), bw, bottom - y_of(v), c);
                }
            }
            SynthKind::Line => {
                for i in 1..vals.len() {
                    cv.line((x_of(i - 1), y_of(vals[i - 1])), (x_of(i), y_of(vals[i])), 3, c);
                }
            }
            SynthKind::Scatter => {
                for (i, &v) in vals.iter().enumerate() {
                    let jitter = rng.random_range(-slot / 4..=slot / 4);
                    cv.disc(x_of(i) + jitter, y_of(v), (text_size / 3).max(2), c);
                }
            }
        }
    }

    let label_size = (text_size * 2 / 3).max(5);
    for i in 0..spec.points {
        let bx = x_of(i) - label_size * 3 / 4;
        boxes.push(cv.text(bx, bottom + label_size / 2 + 2, 2, label_size, &format!("c{i}")));
    }
    for t in 0..3 {
        let y = y_of(t * 50) - label_size / 2;
        boxes.push(cv.text(left - label_size * 3, y, 3, label_size, &format!("{}", t * 50)));
    }

    let mut detections = Vec::new();
    if spec.embellishment {
        let r = (h / 10).max(4);
        let (cx, cy) = (right - 2 * r, top + 2 * r);
        cv.disc(cx, cy, r, [230, 200, 40]);
        cv.line((cx - r, cy), (cx + r, cy), 2, [200, 60, 160]);
        cv.line((cx, cy - r), (cx, cy + r), 2, [200, 60, 160]);
        detections.push(RawDetection::new("star", [cx - r, cy - r, 2 * r + 1, 2 * r + 1], 0.9));
    }

    let columns = std::iter::once("category".to_string())
        .chain((0..series).map(|s| format!("series{}", s + 1)))
        .collect();
    let rows = (0..spec.points)
        .map(|i| {
            std::iter::once(format!("c{i}"))
                .chain(values.iter().map(|v| v[i].to_string()))
                .collect()
        })
        .collect();
    let table = ChartTable::new(spec.title.then_some("Synthetic chart"), columns, rows);

    SynthChart {
        image: ChartImage::from_fn(spec.width, spec.height, |x, y| cv.px[(y * spec.width + x) as usize]),
        text_boxes: boxes,
        table,
        detections,
    }
}

/// Reference samples of the percentile-judged saliency metrics over the
/// seeded corpus, measured the same way the pipeline measures a chart.
pub fn reference_corpus_metrics(backend: &dyn SaliencyBackend, config: &ClarifyConfig) -> ReferenceSet {
    let (w, h) = REFERENCE_CORPUS_SIZE;
    let mut text = Vec::new();
    let mut center = Vec::new();
    let mut transition = Vec::new();
    for seed in REFERENCE_CORPUS_SEEDS {
        let chart = generate(&SynthSpec::random(seed, w, h), seed);
        let img = downsample_for_analysis(&chart.image, config.analysis_max_dim);
        let ocr = FixtureOcr::new().with_boxes(&img, chart.text_boxes.clone());
        let boxes = detect_text_boxes(&img, &ocr).expect("fixture ocr");
        let map = compute_saliency(&img, backend).expect("reference backend");
        let m = SaliencyMetrics::compute(&img, &map, &boxes, &config.transition);
        text.extend(m.text_ratio);
        center.push(m.center_fraction);
        transition.extend(m.transition_coverage);
    }
    let mut set = ReferenceSet::default();
    for (name, samples) in [
        ("text_ratio", text),
        ("center_fraction", center),
        ("transition_coverage", transition),
    ] {
        set.insert(ReferenceDistribution::new(name, samples).expect("finite samples"));
    }
    set
}

pub const REFERENCE_HEADER: &str = "Per-image saliency metrics over the seeded synthetic corpus.\n\
Regenerate with `vizcritique gen-references`.";

/// Text of the bundled reference file.
pub fn reference_file_text() -> String {
    reference_corpus_metrics(&SpectralResidual::default(), &ClarifyConfig::default()).to_text(REFERENCE_HEADER)
}

/// Distinct colors after palette quantization and grouping; handy for
/// checking that a fixture exercises the color filters.
pub fn color_group_count(img: &ChartImage, config: &ClarifyConfig) -> usize {
    group_colors(
        &quantize_palette(img, config.max_palette_entries, config.exclude_background),
        config.color_grouping_threshold,
    )
    .len()
}
