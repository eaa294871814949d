//! The full analyze, clarify, guide and track run for one revision.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::chart::{
    detect_chartjunk, extract_chart_table, ChartTable, ChartTableBackend, DetectedObject, FixtureChartTable,
    FixtureDetector, ObjectDetector,
};
use crate::clarify::{clarify_all, ClarificationCatalog, FilterOutcome, Measurement, MetricsBundle};
use crate::color::{cvd_information_loss, group_colors, quantize_palette, ColorGroup, CvdResult, Deficiency};
use crate::config::ClarifyConfig;
use crate::feedback::{compose_all, EchoLlm, LlmClient, LlmError, PromptContent};
use crate::ingest::{downsample_for_analysis, load_chart_image, ChartImage};
use crate::report::{assemble_report, DesignReport};
use crate::saliency::{
    compute_saliency, render_heatmap_overlay, ReferenceSet, SaliencyBackend, SaliencyMap, SaliencyMetrics,
    SpectralResidual,
};
use crate::text::{detect_text_boxes, FixtureOcr, OcrBackend, TextBox};
use crate::topic::FilterId;
use crate::tracker::{track, TrackError};

pub const HEATMAP_ARTIFACT: &str = "artifacts/heatmap.png";
pub const SALIENCY_ARTIFACT: &str = "artifacts/saliency.png";

pub fn cvd_artifact(d: Deficiency) -> String {
    format!("artifacts/{}", d.artifact_name())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Saliency,
    Text,
    Chart,
    Color,
    Cvd,
    Clarify,
    Feedback,
    Report,
    Tracker,
    Artifacts,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Saliency => "saliency",
            Stage::Text => "text",
            Stage::Chart => "chart",
            Stage::Color => "color",
            Stage::Cvd => "cvd",
            Stage::Clarify => "clarify",
            Stage::Feedback => "feedback",
            Stage::Report => "report",
            Stage::Tracker => "tracker",
            Stage::Artifacts => "artifacts",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
#[error("stage {stage} failed: {message}")]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
    /// Set when the failure was a replay-mode lookup miss.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_miss: Option<String>,
}

impl StageError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        Self {
            stage,
            message: message.to_string(),
            replay_miss: None,
        }
    }

    fn llm(stage: Stage, e: LlmError) -> Self {
        let digest = match &e {
            LlmError::ReplayMiss { digest } => Some(digest.clone()),
            _ => None,
        };
        Self {
            replay_miss: digest,
            ..Self::new(stage, e)
        }
    }
}

/// Where a run writes its images. Paths are relative to the revision
/// directory.
pub trait ArtifactSink: Send + Sync {
    fn put(&self, path: &str, bytes: &[u8]) -> Result<(), String>;
    fn stored(&self) -> BTreeSet<String>;
}

#[derive(Debug, Default)]
pub struct MemorySink {
    files: Mutex<BTreeMap<String, Vec<u8>>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, path: &str) -> Option<Vec<u8>> {
        self.files.lock().unwrap().get(path).cloned()
    }
}

impl ArtifactSink for MemorySink {
    fn put(&self, path: &str, bytes: &[u8]) -> Result<(), String> {
        self.files.lock().unwrap().insert(path.to_string(), bytes.to_vec());
        Ok(())
    }

    fn stored(&self) -> BTreeSet<String> {
        self.files.lock().unwrap().keys().cloned().collect()
    }
}

/// Writes artifacts under a directory, creating parents as needed.
#[derive(Debug)]
pub struct DirSink {
    root: PathBuf,
    written: Mutex<BTreeSet<String>>,
}

impl DirSink {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            written: Mutex::default(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl ArtifactSink for DirSink {
    fn put(&self, path: &str, bytes: &[u8]) -> Result<(), String> {
        if !crate::report::valid_artifact_path(path) {
            return Err(format!("invalid artifact path `{path}`"));
        }
        let full = self.root.join(path);
        if let Some(parent) = full.parent() {
            std::fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
        }
        std::fs::write(&full, bytes).map_err(|e| format!("{}: {e}", full.display()))?;
        self.written.lock().unwrap().insert(path.to_string());
        Ok(())
    }

    fn stored(&self) -> BTreeSet<String> {
        self.written.lock().unwrap().clone()
    }
}

/// The external components a run talks to.
pub struct Backends {
    pub saliency: Arc<dyn SaliencyBackend>,
    pub ocr: Arc<dyn OcrBackend>,
    pub chart_table: Arc<dyn ChartTableBackend>,
    pub detector: Arc<dyn ObjectDetector>,
    pub llm: LlmClient,
}

impl Backends {
    /// Local spectral-residual saliency, fixture stubs that know no images,
    /// and the echo LLM.
    pub fn stubs() -> Self {
        Self {
            saliency: Arc::new(SpectralResidual::default()),
            ocr: Arc::new(FixtureOcr::new()),
            chart_table: Arc::new(FixtureChartTable::new()),
            detector: Arc::new(FixtureDetector::new()),
            llm: LlmClient::live(Arc::new(EchoLlm)),
        }
    }
}

impl fmt::Debug for Backends {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backends")
            .field("saliency", &self.saliency.id())
            .field("ocr", &self.ocr.id())
            .field("chart_table", &self.chart_table.id())
            .field("detector", &self.detector.id())
            .field("llm", &self.llm)
            .finish()
    }
}

/// Everything a run needs besides the image.
#[derive(Debug)]
pub struct Analyzer {
    pub config: ClarifyConfig,
    pub references: ReferenceSet,
    pub catalog: ClarificationCatalog,
    pub content: PromptContent,
    pub backends: Backends,
}

impl Analyzer {
    pub fn new(config: ClarifyConfig, backends: Backends) -> Self {
        Self {
            config,
            references: ReferenceSet::bundled(),
            catalog: ClarificationCatalog::bundled(),
            content: PromptContent::bundled(),
            backends,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisRequest<'a> {
    pub revision_id: &'a str,
    pub created_at: &'a str,
    pub image_bytes: &'a [u8],
    /// Declared format or file extension.
    pub format: &'a str,
}

struct SaliencyOut {
    map: SaliencyMap,
}

struct ColorOut {
    groups: Vec<ColorGroup>,
}

fn backend_note(kind: &str, id: &str) -> String {
    format!("{kind} backend: {id}.")
}

fn put_png(sink: &dyn ArtifactSink, path: &str, bytes: &[u8], stage: Stage) -> Result<String, StageError> {
    sink.put(path, bytes).map_err(|e| StageError::new(stage, e))?;
    Ok(path.to_string())
}

fn joined<T>(handle: std::thread::ScopedJoinHandle<'_, T>, name: &str) -> T {
    handle.join().unwrap_or_else(|_| panic!("{name} worker panicked"))
}

/// Runs every filter on the analysis-size image and writes the visual
/// artifacts. Filters run concurrently; the first failure in stage order
/// is reported.
pub fn run_filters(
    img: &ChartImage,
    analyzer: &Analyzer,
    sink: &dyn ArtifactSink,
) -> Result<MetricsBundle, StageError> {
    let cfg = &analyzer.config;
    let b = &analyzer.backends;
    let (sal, text, chart, junk, color, cvd) = std::thread::scope(|s| {
        let sal = s.spawn(|| compute_saliency(img, b.saliency.as_ref()).map(|map| SaliencyOut { map }));
        let text = s.spawn(|| detect_text_boxes(img, b.ocr.as_ref()));
        let chart = s.spawn(|| extract_chart_table(img, b.chart_table.as_ref()));
        let junk = s.spawn(|| detect_chartjunk(img, b.detector.as_ref(), cfg.detection_confidence_floor));
        let color = s.spawn(|| ColorOut {
            groups: group_colors(
                &quantize_palette(img, cfg.max_palette_entries, cfg.exclude_background),
                cfg.color_grouping_threshold,
            ),
        });
        let cvd = s.spawn(|| {
            Deficiency::ALL
                .into_iter()
                .map(|d| cvd_information_loss(img, d, cfg.cvd_loss_threshold))
                .collect::<Vec<CvdResult>>()
        });
        (
            joined(sal, "saliency"),
            joined(text, "text"),
            joined(chart, "chart"),
            joined(junk, "detector"),
            joined(color, "color"),
            joined(cvd, "cvd"),
        )
    });
    let be = |stage: Stage| move |e: BackendError| StageError::new(stage, e);
    let sal = sal.map_err(be(Stage::Saliency))?;
    // Artifacts go out before the remaining stage errors so a failed run
    // still leaves them behind.
    let map = &sal.map;
    let heatmap = put_png(
        sink,
        HEATMAP_ARTIFACT,
        &render_heatmap_overlay(img, map).to_png_bytes(),
        Stage::Saliency,
    )?;
    let gray = put_png(sink, SALIENCY_ARTIFACT, &map.to_gray_png(), Stage::Saliency)?;
    let mut cvd_artifacts = Vec::new();
    for r in &cvd {
        if let Some(sim) = &r.simulated {
            cvd_artifacts.push(put_png(
                sink,
                &cvd_artifact(r.deficiency),
                &sim.to_png_bytes(),
                Stage::Cvd,
            )?);
        }
    }
    let boxes: Vec<TextBox> = text.map_err(be(Stage::Text))?;
    let table: ChartTable = chart.map_err(be(Stage::Chart))?;
    let detections: Vec<DetectedObject> = junk.map_err(be(Stage::Chart))?;

    let zero = map.is_zero();
    let metrics = SaliencyMetrics::compute(img, map, &boxes, &cfg.transition);
    let n = map.values().len().max(1) as f64;
    let saliency_mass = map.total_mass() / n;
    let peak_fraction = map.values().iter().filter(|&&v| v >= 0.5).count() as f64 / n;
    let sal_note = backend_note("Saliency", map.backend_id());
    let ocr_note = backend_note("Text detection", b.ocr.id());
    let table_note = backend_note("Chart-to-table", b.chart_table.id());

    let measured = |m: Measurement, artifacts: Vec<String>, notes: Vec<String>| FilterOutcome::Measured {
        measurement: m,
        artifacts,
        notes,
    };
    let mut table_notes = vec![table_note.clone()];
    table_notes.extend(table.warnings.iter().cloned());
    let bundle = MetricsBundle::new()
        .with(
            FilterId::VirtualEyetracker,
            measured(
                Measurement::VirtualEyetracker {
                    saliency_mass,
                    peak_fraction,
                },
                vec![heatmap.clone(), gray],
                vec![sal_note.clone()],
            ),
        )
        .with(
            FilterId::FocusOnText,
            measured(
                Measurement::FocusOnText {
                    text_ratio: metrics.text_ratio,
                    saliency_zero: zero,
                },
                vec![heatmap.clone()],
                vec![sal_note.clone(), ocr_note.clone()],
            ),
        )
        .with(
            FilterId::FocusOnCenter,
            measured(
                Measurement::FocusOnCenter {
                    center_fraction: metrics.center_fraction,
                    saliency_zero: zero,
                },
                vec![heatmap.clone()],
                vec![sal_note.clone()],
            ),
        )
        .with(
            FilterId::FocusOnVisualAttention,
            measured(
                Measurement::FocusOnVisualAttention {
                    transition_coverage: metrics.transition_coverage,
                    saliency_zero: zero,
                },
                vec![heatmap],
                vec![sal_note],
            ),
        )
        .with(
            FilterId::Title,
            measured(Measurement::Title { table: table.clone() }, vec![], table_notes.clone()),
        )
        .with(
            FilterId::TextualContent,
            measured(
                Measurement::TextualContent {
                    text_box_count: boxes.len(),
                    has_text: crate::text::has_text(&boxes),
                },
                vec![],
                vec![ocr_note],
            ),
        )
        .with(
            FilterId::OptimalChartType,
            measured(Measurement::OptimalChartType { table }, vec![], table_notes),
        )
        .with(
            FilterId::Chartjunk,
            measured(
                Measurement::Chartjunk { detections },
                vec![],
                vec![backend_note("Object detection", b.detector.id())],
            ),
        )
        .with(
            FilterId::ColorVariability,
            measured(
                Measurement::ColorVariability {
                    groups: color.groups.clone(),
                },
                vec![],
                vec![],
            ),
        )
        .with(
            FilterId::ColorSimilarity,
            measured(Measurement::ColorSimilarity { groups: color.groups }, vec![], vec![]),
        )
        .with(
            FilterId::Cvd,
            measured(Measurement::Cvd { results: cvd }, cvd_artifacts, vec![]),
        );
    Ok(bundle)
}

/// Ingest, filters, clarification, feedback, report and tracker for one
/// revision. `previous` is the report of the preceding revision, if any.
/// Artifacts written before a failure stay in the sink.
pub fn run_analysis(
    request: &AnalysisRequest<'_>,
    previous: Option<&DesignReport>,
    analyzer: &Analyzer,
    sink: &dyn ArtifactSink,
) -> Result<DesignReport, StageError> {
    let original =
        load_chart_image(request.image_bytes, request.format).map_err(|e| StageError::new(Stage::Ingest, e))?;
    let img = downsample_for_analysis(&original, analyzer.config.analysis_max_dim);
    let bundle = run_filters(&img, analyzer, sink)?;
    let findings = clarify_all(&bundle, &analyzer.config, &analyzer.references, &analyzer.catalog)
        .map_err(|e| StageError::new(Stage::Clarify, e))?;
    let texts = compose_all(&findings, &analyzer.content, &analyzer.backends.llm)
        .map_err(|e| StageError::llm(Stage::Feedback, e))?;
    let mut report = assemble_report(
        request.revision_id,
        request.created_at,
        &findings,
        &texts,
        &sink.stored(),
    )
    .map_err(|e| StageError::new(Stage::Report, e))?;
    let tracker =
        track(previous, &report, &analyzer.content.questions, &analyzer.backends.llm).map_err(|e| match e {
            TrackError::Llm(e) => StageError::llm(Stage::Tracker, e),
            other => StageError::new(Stage::Tracker, other),
        })?;
    report.tracker = Some(tracker);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::ExchangeStore;
    use crate::report::serialize_report;
    use crate::synth::{generate, SynthSpec};
    use crate::tracker::TrackerOutput;

    fn fixture_analyzer(chart: &crate::synth::SynthChart, llm: LlmClient) -> Analyzer {
        let img = &chart.image;
        let mut backends = Backends::stubs();
        backends.ocr = Arc::new(FixtureOcr::new().with_boxes(img, chart.text_boxes.clone()));
        backends.chart_table = Arc::new(FixtureChartTable::new().with_table(img, chart.table.clone()));
        backends.detector = Arc::new(FixtureDetector::new().with_detections(img, chart.detections.clone()));
        backends.llm = llm;
        Analyzer::new(ClarifyConfig::default(), backends)
    }

    fn request<'a>(id: &'a str, png: &'a [u8]) -> AnalysisRequest<'a> {
        AnalysisRequest {
            revision_id: id,
            created_at: "2024-05-01T12:00:00Z",
            image_bytes: png,
            format: "png",
        }
    }

    #[test]
    fn bar_chart_with_stubs() {
        let chart = generate(&SynthSpec::bar(300, 240), 4);
        let analyzer = fixture_analyzer(&chart, LlmClient::live(Arc::new(EchoLlm)));
        let sink = MemorySink::new();
        let png = chart.image.to_png_bytes();
        let report = run_analysis(&request("1", &png), None, &analyzer, &sink).unwrap();
        assert_eq!(report.sections.len(), 5);
        assert_eq!(report.subsections().count(), 11);
        assert_eq!(report.tracker, Some(TrackerOutput::first_version()));
        let stored = sink.stored();
        for a in report.artifacts() {
            assert!(stored.contains(a), "{a}");
        }
        assert!(stored.contains("artifacts/cvd_deuteranopia.png"));
        let title = report
            .subsections()
            .find(|(_, s)| s.filter_id == FilterId::Title)
            .unwrap()
            .1;
        assert!(!title.flagged);
        let junk = report
            .subsections()
            .find(|(_, s)| s.filter_id == FilterId::Chartjunk)
            .unwrap()
            .1;
        assert_eq!(junk.clarification, "We did not detect any chartjunk.");
    }

    #[test]
    fn ocr_failure_names_the_stage() {
        let chart = generate(&SynthSpec::bar(200, 200), 1);
        let mut analyzer = fixture_analyzer(&chart, LlmClient::live(Arc::new(EchoLlm)));
        analyzer.backends.ocr = Arc::new(FixtureOcr::failing());
        let sink = MemorySink::new();
        let png = chart.image.to_png_bytes();
        let err = run_analysis(&request("1", &png), None, &analyzer, &sink).unwrap_err();
        assert_eq!(err.stage, Stage::Text);
        assert!(err.replay_miss.is_none());
    }

    #[test]
    fn bad_image_fails_ingest() {
        let analyzer = Analyzer::new(ClarifyConfig::default(), Backends::stubs());
        let png = ChartImage::filled(99, 99, [0, 0, 0]).to_png_bytes();
        let err = run_analysis(&request("1", &png), None, &analyzer, &MemorySink::new()).unwrap_err();
        assert_eq!(err.stage, Stage::Ingest);
    }

    #[test]
    fn replay_miss_is_reported_with_digest() {
        let chart = generate(&SynthSpec::bar(200, 200), 1);
        let analyzer = fixture_analyzer(&chart, LlmClient::replay(Arc::new(ExchangeStore::in_memory())));
        let sink = MemorySink::new();
        let png = chart.image.to_png_bytes();
        let err = run_analysis(&request("1", &png), None, &analyzer, &sink).unwrap_err();
        assert_eq!(err.stage, Stage::Feedback);
        assert_eq!(err.replay_miss.as_ref().map(String::len), Some(64));
        // Filter artifacts survive the failure.
        assert!(sink.stored().contains(HEATMAP_ARTIFACT));
    }

    #[test]
    fn record_then_replay_is_byte_identical() {
        let mut spec = SynthSpec::bar(320, 240);
        spec.embellishment = true;
        spec.red_green = true;
        spec.series = 2;
        let chart = generate(&spec, 9);
        let png = chart.image.to_png_bytes();
        let store = Arc::new(ExchangeStore::in_memory());
        let rec = fixture_analyzer(&chart, LlmClient::record(Arc::new(EchoLlm), store.clone()));
        let first = run_analysis(&request("1", &png), None, &rec, &MemorySink::new()).unwrap();
        let second = run_analysis(&request("2", &png), Some(&first), &rec, &MemorySink::new()).unwrap();

        let rep = fixture_analyzer(&chart, LlmClient::replay(store));
        let first_b = run_analysis(&request("1", &png), None, &rep, &MemorySink::new()).unwrap();
        let second_b = run_analysis(&request("2", &png), Some(&first_b), &rep, &MemorySink::new()).unwrap();
        assert_eq!(serialize_report(&first), serialize_report(&first_b));
        assert_eq!(serialize_report(&second), serialize_report(&second_b));
        assert!(matches!(second.tracker, Some(TrackerOutput::Compared { .. })));

        let junk = first
            .subsections()
            .find(|(_, s)| s.filter_id == FilterId::Chartjunk)
            .unwrap()
            .1;
        assert!(junk.flagged);
    }
}
