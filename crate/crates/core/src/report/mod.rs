//! The hierarchical design report and its canonical serialization.

mod markdown;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use markdown::{render_delta_table, render_markdown};

use crate::clarify::{FilterFinding, Status};
use crate::feedback::FeedbackTexts;
use crate::topic::{FilterId, Topic};
use crate::tracker::TrackerOutput;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subsection {
    pub filter_id: FilterId,
    pub flagged: bool,
    pub clarification: String,
    pub explanations: String,
    pub suggestions: String,
    pub raw_metrics: BTreeMap<String, f64>,
    /// Paths relative to the revision directory.
    pub artifacts: Vec<String>,
    /// How the result was obtained: backends used, known biases.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub topic: Topic,
    pub status: Status,
    pub summary: String,
    pub subsections: Vec<Subsection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub schema_version: u32,
    pub revision_id: String,
    pub created_at: String,
    pub sections: Vec<Section>,
    pub overview_summary: String,
    pub tracker: Option<TrackerOutput>,
}

impl DesignReport {
    pub fn section(&self, topic: Topic) -> Option<&Section> {
        self.sections.iter().find(|s| s.topic == topic)
    }

    pub fn subsections(&self) -> impl Iterator<Item = (Topic, &Subsection)> {
        self.sections
            .iter()
            .flat_map(|s| s.subsections.iter().map(move |sub| (s.topic, sub)))
    }

    pub fn artifacts(&self) -> BTreeSet<&str> {
        self.subsections()
            .flat_map(|(_, s)| s.artifacts.iter().map(String::as_str))
            .collect()
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ReportError {
    #[error("no explanations and suggestions for filter `{0}`")]
    MissingText(FilterId),
    #[error("artifact `{0}` is not in the revision's artifact store")]
    MissingArtifact(String),
    #[error("artifact path `{0}` must be relative and stay inside the revision directory")]
    BadArtifactPath(String),
    #[error("metric `{filter}.{metric}` is not a finite number")]
    NonFiniteMetric { filter: FilterId, metric: String },
}

/// One-line summary of a topic's findings.
pub fn topic_summary(topic: Topic, findings: &[&FilterFinding]) -> String {
    let flagged: Vec<&str> = findings
        .iter()
        .filter(|f| f.flagged)
        .map(|f| f.filter_id.title())
        .collect();
    match flagged.len() {
        0 => format!("{}: no issue found.", topic.title()),
        1 => format!("{}: 1 issue found ({}).", topic.title(), flagged[0]),
        n => format!("{}: {n} issues found ({}).", topic.title(), flagged.join(", ")),
    }
}

pub fn valid_artifact_path(path: &str) -> bool {
    !path.is_empty()
        && !path.starts_with('/')
        && !path.contains('\\')
        && path
            .split('/')
            .all(|part| !part.is_empty() && part != "." && part != "..")
}

/// Builds the five-section report. Every finding needs its LLM texts and
/// every referenced artifact must be in `stored_artifacts`.
pub fn assemble_report(
    revision_id: &str,
    created_at: &str,
    findings: &[FilterFinding],
    texts: &BTreeMap<FilterId, FeedbackTexts>,
    stored_artifacts: &BTreeSet<String>,
) -> Result<DesignReport, ReportError> {
    let mut sections = Vec::new();
    let mut overview = Vec::new();
    for topic in Topic::ALL {
        let mut of_topic: Vec<&FilterFinding> = findings.iter().filter(|f| f.topic == topic).collect();
        of_topic.sort_by_key(|f| f.filter_id);
        let mut subsections = Vec::new();
        for f in &of_topic {
            let t = texts.get(&f.filter_id).ok_or(ReportError::MissingText(f.filter_id))?;
            for a in &f.artifacts {
                if !valid_artifact_path(a) {
                    return Err(ReportError::BadArtifactPath(a.clone()));
                }
                if !stored_artifacts.contains(a) {
                    return Err(ReportError::MissingArtifact(a.clone()));
                }
            }
            if let Some((name, _)) = f.metrics.iter().find(|(_, v)| !v.is_finite()) {
                return Err(ReportError::NonFiniteMetric {
                    filter: f.filter_id,
                    metric: name.clone(),
                });
            }
            subsections.push(Subsection {
                filter_id: f.filter_id,
                flagged: f.flagged,
                clarification: f.clarification_text.clone(),
                explanations: t.explanations.clone(),
                suggestions: t.suggestions.clone(),
                raw_metrics: f.metrics.clone(),
                artifacts: f.artifacts.clone(),
                notes: f.notes.clone(),
            });
        }
        let summary = topic_summary(topic, &of_topic);
        overview.push(summary.clone());
        sections.push(Section {
            topic,
            status: Status::from_flag_count(of_topic.iter().filter(|f| f.flagged).count()),
            summary,
            subsections,
        });
    }
    Ok(DesignReport {
        schema_version: SCHEMA_VERSION,
        revision_id: revision_id.to_string(),
        created_at: created_at.to_string(),
        sections,
        overview_summary: overview.join("\n"),
        tracker: None,
    })
}

/// Rebuilds every object with its keys in sorted order, whatever map type
/// serde_json was compiled with.
pub fn canonicalize(value: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, canonicalize(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        other => other,
    }
}

/// Pretty JSON with object keys sorted at every level.
pub fn serialize_report(report: &DesignReport) -> String {
    let value = canonicalize(serde_json::to_value(report).expect("reports serialize"));
    let mut text = serde_json::to_string_pretty(&value).expect("values serialize");
    text.push('\n');
    text
}

pub fn deserialize_report(text: &str) -> Result<DesignReport, serde_json::Error> {
    serde_json::from_str(text)
}
