//! Building backends from endpoint settings, shared by the CLI and the
//! service.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{
    parse_chart_table, parse_detections, FixtureChartTable, FixtureDetector, HttpChartTableBackend, HttpObjectDetector,
};
use crate::feedback::{EchoLlm, ExchangeStore, HttpLlm, LlmBackend, LlmClient, LlmMode};
use crate::ingest::{downsample_for_analysis, ChartImage};
use crate::pipeline::Backends;
use crate::saliency::{HttpSaliencyBackend, SpectralResidual};
use crate::text::{parse_ocr_response, FixtureOcr, HttpOcrBackend};

/// Where each backend lives. Unset endpoints fall back to local stubs:
/// spectral-residual saliency, fixture OCR, chart-to-table and detector
/// (populated from `fixtures` when given), and the echo LLM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub mode: LlmMode,
    /// JSON-lines exchange store; required for record and replay.
    pub exchanges: Option<PathBuf>,
    pub llm_url: Option<String>,
    pub saliency_url: Option<String>,
    pub ocr_url: Option<String>,
    pub chart_table_url: Option<String>,
    pub detector_url: Option<String>,
    /// Directory of fixture responses named `<digest>.ocr`, `<digest>.table`
    /// and `<digest>.detections`, in the HTTP wire formats.
    pub fixtures: Option<PathBuf>,
    pub timeout_secs: u64,
    pub llm_max_in_flight: usize,
    pub llm_min_interval_ms: u64,
}

impl Default for BackendSettings {
    fn default() -> Self {
        Self {
            mode: LlmMode::Live,
            exchanges: None,
            llm_url: None,
            saliency_url: None,
            ocr_url: None,
            chart_table_url: None,
            detector_url: None,
            fixtures: None,
            timeout_secs: 120,
            llm_max_in_flight: 4,
            llm_min_interval_ms: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SetupError {
    #[error("{0} mode needs an exchange store path")]
    MissingExchanges(LlmMode),
    #[error("exchange store: {0}")]
    Store(String),
    #[error("fixture {path}: {message}")]
    Fixture { path: PathBuf, message: String },
}

/// Digest the fixture backends key on: that of the analysis-size image.
pub fn fixture_digest(img: &ChartImage, analysis_max_dim: u32) -> String {
    downsample_for_analysis(img, analysis_max_dim).content_digest()
}

struct Fixtures {
    ocr: FixtureOcr,
    table: FixtureChartTable,
    detector: FixtureDetector,
}

fn load_fixtures(dir: &Path) -> Result<Fixtures, SetupError> {
    let err = |path: &Path, message: String| SetupError::Fixture {
        path: path.to_path_buf(),
        message,
    };
    let mut out = Fixtures {
        ocr: FixtureOcr::new(),
        table: FixtureChartTable::new(),
        detector: FixtureDetector::new(),
    };
    let entries = std::fs::read_dir(dir).map_err(|e| err(dir, e.to_string()))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for path in paths {
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        if !matches!(ext, "ocr" | "table" | "detections") {
            continue;
        }
        let body = std::fs::read_to_string(&path).map_err(|e| err(&path, e.to_string()))?;
        match ext {
            "ocr" => out.ocr.insert_digest(
                stem,
                parse_ocr_response(&body, "fixture-ocr").map_err(|e| err(&path, e.to_string()))?,
            ),
            "table" => out.table.insert_digest(stem, parse_chart_table(&body)),
            _ => out.detector.insert_digest(
                stem,
                parse_detections(&body, "fixture-detector").map_err(|e| err(&path, e.to_string()))?,
            ),
        }
    }
    Ok(out)
}

pub fn build_backends(settings: &BackendSettings) -> Result<Backends, SetupError> {
    let timeout = Duration::from_secs(settings.timeout_secs.max(1));
    let fixtures = match &settings.fixtures {
        Some(dir) => load_fixtures(dir)?,
        None => Fixtures {
            ocr: FixtureOcr::new(),
            table: FixtureChartTable::new(),
            detector: FixtureDetector::new(),
        },
    };
    let store = match (&settings.exchanges, settings.mode) {
        (Some(path), _) => Some(Arc::new(
            ExchangeStore::open(path).map_err(|e| SetupError::Store(e.to_string()))?,
        )),
        (None, LlmMode::Live) => None,
        (None, mode) => return Err(SetupError::MissingExchanges(mode)),
    };
    let llm_backend: Arc<dyn LlmBackend> = match &settings.llm_url {
        Some(url) => Arc::new(HttpLlm::new(url, timeout)),
        None => Arc::new(EchoLlm),
    };
    let llm = match settings.mode {
        LlmMode::Live => LlmClient::live(llm_backend),
        LlmMode::Record => LlmClient::record(llm_backend, store.expect("checked above")),
        LlmMode::Replay => LlmClient::replay(store.expect("checked above")),
    }
    .with_max_in_flight(settings.llm_max_in_flight)
    .with_min_interval(Duration::from_millis(settings.llm_min_interval_ms));

    Ok(Backends {
        saliency: match &settings.saliency_url {
            Some(url) => Arc::new(HttpSaliencyBackend::new(url, timeout)),
            None => Arc::new(SpectralResidual::default()),
        },
        ocr: match &settings.ocr_url {
            Some(url) => Arc::new(HttpOcrBackend::new(url, timeout)),
            None => Arc::new(fixtures.ocr),
        },
        chart_table: match &settings.chart_table_url {
            Some(url) => Arc::new(HttpChartTableBackend::new(url, timeout)),
            None => Arc::new(fixtures.table),
        },
        detector: match &settings.detector_url {
            Some(url) => Arc::new(HttpObjectDetector::new(url, timeout)),
            None => Arc::new(fixtures.detector),
        },
        llm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthSpec};
    use crate::text::format_ocr_response;

    #[test]
    fn defaults_are_local() {
        let b = build_backends(&BackendSettings::default()).unwrap();
        assert_eq!(b.saliency.id(), "spectral-residual");
        assert_eq!(b.llm.backend_id(), "echo-stub");
        assert_eq!(b.llm.mode(), LlmMode::Live);
    }

    #[test]
    fn replay_needs_a_store() {
        let s = BackendSettings {
            mode: LlmMode::Replay,
            ..Default::default()
        };
        assert!(matches!(
            build_backends(&s),
            Err(SetupError::MissingExchanges(LlmMode::Replay))
        ));
    }

    #[test]
    fn fixtures_are_keyed_by_analysis_digest() {
        let dir = tempfile::tempdir().unwrap();
        let chart = generate(&SynthSpec::bar(700, 400), 2);
        let digest = fixture_digest(&chart.image, 512);
        std::fs::write(
            dir.path().join(format!("{digest}.ocr")),
            format_ocr_response(&chart.text_boxes),
        )
        .unwrap();
        std::fs::write(dir.path().join(format!("{digest}.table")), chart.table.to_wire()).unwrap();
        std::fs::write(dir.path().join(format!("{digest}.detections")), "star 1 2 3 4 0.9\n").unwrap();
        std::fs::write(dir.path().join("README"), "ignored").unwrap();
        let s = BackendSettings {
            fixtures: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let b = build_backends(&s).unwrap();
        let small = downsample_for_analysis(&chart.image, 512);
        assert_eq!(b.ocr.detect(&small).unwrap(), chart.text_boxes);
        assert_eq!(b.chart_table.extract(&small).unwrap(), chart.table);
        assert_eq!(b.detector.detect(&small).unwrap().len(), 1);
        assert!(b.ocr.detect(&chart.image).unwrap().is_empty());
    }

    #[test]
    fn settings_parse_from_toml() {
        let s: BackendSettings =
            toml::from_str("mode = \"record\"\nexchanges = \"x.jsonl\"\nllm_url = \"http://h/llm\"").unwrap();
        assert_eq!(s.mode, LlmMode::Record);
        assert_eq!(s.timeout_secs, 120);
        assert!(toml::from_str::<BackendSettings>("bogus = 1").is_err());
    }
}
