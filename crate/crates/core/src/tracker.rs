//! Metric deltas between revisions and tracking summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback::{
    build_track_prompt, format_metrics, LlmClient, LlmError, LlmRequest, QuestionBank, SYSTEM_PREAMBLE,
};
use crate::report::DesignReport;
use crate::topic::{FilterId, Topic};

pub const UNCHANGED_TOLERANCE: f64 = 1e-9;
pub const FIRST_VERSION_MARKER: &str = "first version \u{2014} nothing to compare";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeDirection {
    Increase,
    Decrease,
    Unchanged,
    Incomparable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub topic: Topic,
    /// `<filter>.<metric>`.
    pub metric_name: String,
    pub prev: Option<f64>,
    pub curr: Option<f64>,
    pub delta: Option<f64>,
    pub direction: ChangeDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicTrack {
    pub topic: Topic,
    pub changed: bool,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrackerOutput {
    FirstVersion {
        marker: String,
    },
    Compared {
        previous_revision_id: String,
        deltas: Vec<MetricDelta>,
        topics: Vec<TopicTrack>,
    },
}

impl TrackerOutput {
    pub fn first_version() -> Self {
        TrackerOutput::FirstVersion {
            marker: FIRST_VERSION_MARKER.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
#[error("report schema versions differ: {prev} vs {curr}")]
pub struct SchemaMismatch {
    pub prev: u32,
    pub curr: u32,
}

fn metric_map(report: &DesignReport) -> BTreeMap<(Topic, FilterId, String), f64> {
    report
        .subsections()
        .flat_map(|(topic, s)| {
            s.raw_metrics
                .iter()
                .map(move |(name, v)| ((topic, s.filter_id, name.clone()), *v))
        })
        .collect()
}

pub fn classify(prev: Option<f64>, curr: Option<f64>) -> (Option<f64>, ChangeDirection) {
    match (prev, curr) {
        (Some(p), Some(c)) => {
            let d = c - p;
            let dir = if d.abs() < UNCHANGED_TOLERANCE {
                ChangeDirection::Unchanged
            } else if d > 0.0 {
                ChangeDirection::Increase
            } else {
                ChangeDirection::Decrease
            };
            (Some(d), dir)
        }
        _ => (None, ChangeDirection::Incomparable),
    }
}

/// One delta per metric present in either report, in topic, filter and
/// metric-name order.
pub fn diff_metrics(prev: &DesignReport, curr: &DesignReport) -> Result<Vec<MetricDelta>, SchemaMismatch> {
    if prev.schema_version != curr.schema_version {
        return Err(SchemaMismatch {
            prev: prev.schema_version,
            curr: curr.schema_version,
        });
    }
    let p = metric_map(prev);
    let c = metric_map(curr);
    let mut keys: Vec<_> = p.keys().chain(c.keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    Ok(keys
        .into_iter()
        .map(|key| {
            let pv = p.get(&key).copied();
            let cv = c.get(&key).copied();
            let (delta, direction) = classify(pv, cv);
            MetricDelta {
                topic: key.0,
                metric_name: format!("{}.{}", key.1.as_str(), key.2),
                prev: pv,
                curr: cv,
                delta,
                direction,
            }
        })
        .collect())
}

pub fn no_change_sentence(topic: Topic) -> String {
    format!(
        "No change in {} between the previous and current versions.",
        topic.phrase()
    )
}

/// Measured results and clarifications ([output]) and explanations
/// ([interpretations]) of one topic.
fn topic_texts(report: &DesignReport, topic: Topic) -> (String, String) {
    let Some(section) = report.section(topic) else {
        return (String::new(), String::new());
    };
    let mut output = Vec::new();
    let mut interp = Vec::new();
    for s in &section.subsections {
        let metrics = format_metrics(&s.raw_metrics, s.filter_id);
        let mut line = format!("{}:", s.filter_id.title());
        if !metrics.is_empty() {
            line.push_str(&format!(" {metrics}."));
        }
        line.push(' ');
        line.push_str(&s.clarification);
        output.push(line);
        if !s.explanations.trim().is_empty() {
            interp.push(s.explanations.trim().to_string());
        }
    }
    (output.join(" "), interp.join(" "))
}

/// One sentence per topic. Topics without a measurable change get a fixed
/// sentence and no LLM call.
pub fn track_summary(
    deltas: &[MetricDelta],
    prev: &DesignReport,
    curr: &DesignReport,
    questions: &QuestionBank,
    client: &LlmClient,
) -> Result<Vec<TopicTrack>, LlmError> {
    let mut out = Vec::new();
    for topic in Topic::ALL {
        let changed = deltas
            .iter()
            .any(|d| d.topic == topic && matches!(d.direction, ChangeDirection::Increase | ChangeDirection::Decrease));
        let summary = if changed {
            let (curr_out, curr_interp) = topic_texts(curr, topic);
            let (prev_out, prev_interp) = topic_texts(prev, topic);
            let prompt = build_track_prompt(
                &questions.track(topic),
                &curr_out,
                &curr_interp,
                &prev_out,
                &prev_interp,
            )
            .expect("tracking question is nonempty");
            client.generate(&LlmRequest::new(SYSTEM_PREAMBLE, &prompt.assembled))?
        } else {
            no_change_sentence(topic)
        };
        out.push(TopicTrack {
            topic,
            changed,
            summary,
        });
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum TrackError {
    #[error(transparent)]
    Schema(#[from] SchemaMismatch),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Tracker output for `curr` against the previous revision's report, or the
/// first-version marker when there is none.
pub fn track(
    prev: Option<&DesignReport>,
    curr: &DesignReport,
    questions: &QuestionBank,
    client: &LlmClient,
) -> Result<TrackerOutput, TrackError> {
    let Some(prev) = prev else {
        return Ok(TrackerOutput::first_version());
    };
    let deltas = diff_metrics(prev, curr)?;
    let topics = track_summary(&deltas, prev, curr, questions, client)?;
    Ok(TrackerOutput::Compared {
        previous_revision_id: prev.revision_id.clone(),
        deltas,
        topics,
    })
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ArchiveError {
    #[error("project `{project}` has no revision {seq}")]
    UnknownRevision { project: String, seq: u32 },
    #[error("revision {seq} of project `{project}` has no report yet")]
    NotReady { project: String, seq: u32 },
    #[error("report store: {0}")]
    Store(String),
}

/// Read access to stored reports.
pub trait ReportArchive {
    fn load_report(&self, project: &str, seq: u32) -> Result<DesignReport, ArchiveError>;
}

/// Two stored reports for side-by-side comparison. The same revision may
/// be requested twice.
pub fn archive_pair(
    archive: &dyn ReportArchive,
    project: &str,
    a: u32,
    b: u32,
) -> Result<(DesignReport, DesignReport), ArchiveError> {
    Ok((archive.load_report(project, a)?, archive.load_report(project, b)?))
}
