use std::fmt::Write;

use super::DesignReport;
use crate::tracker::{ChangeDirection, MetricDelta, TrackerOutput};

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn paragraph(out: &mut String, label: &str, text: &str) {
    if !text.trim().is_empty() {
        let _ = writeln!(out, "**{label}:** {}\n", text.trim());
    }
}

/// Markdown rendering of a report. Status glyphs appear only on sections
/// with flagged findings.
pub fn render_markdown(report: &DesignReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Design report: revision {}\n", report.revision_id);
    let _ = writeln!(out, "Created {}\n", report.created_at);
    out.push_str("## Overview\n\n");
    for line in report.overview_summary.lines() {
        let _ = writeln!(out, "- {line}");
    }
    out.push('\n');

    for section in &report.sections {
        let glyph = section.status.glyph();
        if glyph.is_empty() {
            let _ = writeln!(out, "## {}\n", section.topic.title());
        } else {
            let _ = writeln!(out, "## {glyph} {}\n", section.topic.title());
        }
        let _ = writeln!(out, "{}\n", section.summary);
        for sub in &section.subsections {
            let mark = if sub.flagged { " (flagged)" } else { "" };
            let _ = writeln!(out, "### {}{mark}\n", sub.filter_id.title());
            let _ = writeln!(out, "{}\n", sub.clarification);
            paragraph(&mut out, "Explanations", &sub.explanations);
            paragraph(&mut out, "Suggestions", &sub.suggestions);
            if !sub.raw_metrics.is_empty() {
                out.push_str("| Metric | Value |\n| --- | ---: |\n");
                for (name, v) in &sub.raw_metrics {
                    let _ = writeln!(out, "| {name} | {} |", fmt_value(Some(*v)));
                }
                out.push('\n');
            }
            if !sub.artifacts.is_empty() {
                out.push_str("Artifacts:\n\n");
                for a in &sub.artifacts {
                    let name = a.rsplit('/').next().unwrap_or(a);
                    let _ = writeln!(out, "- [{name}]({a})");
                }
                out.push('\n');
            }
            if !sub.notes.is_empty() {
                out.push_str("Notes:\n\n");
                for n in &sub.notes {
                    let _ = writeln!(out, "- {n}");
                }
                out.push('\n');
            }
        }
    }

    match &report.tracker {
        None => {}
        Some(TrackerOutput::FirstVersion { marker }) => {
            let _ = writeln!(out, "## Tracker\n\n{marker}\n");
        }
        Some(TrackerOutput::Compared {
            previous_revision_id,
            deltas,
            topics,
        }) => {
            let _ = writeln!(out, "## Tracker\n\nCompared with revision {previous_revision_id}.\n");
            for t in topics {
                let _ = writeln!(out, "- {}: {}", t.topic.title(), t.summary);
            }
            out.push('\n');
            if !deltas.is_empty() {
                out.push_str(&render_delta_table(deltas));
                out.push('\n');
            }
        }
    }
    while out.ends_with("\n\n") {
        out.pop();
    }
    out
}

/// Markdown table of metric deltas, one row per delta.
pub fn render_delta_table(deltas: &[MetricDelta]) -> String {
    let mut out = String::new();
    out.push_str("| Topic | Metric | Previous | Current | Delta | Direction |\n");
    out.push_str("| --- | --- | ---: | ---: | ---: | --- |\n");
    for d in deltas {
        let dir = match d.direction {
            ChangeDirection::Increase => "increase",
            ChangeDirection::Decrease => "decrease",
            ChangeDirection::Unchanged => "unchanged",
            ChangeDirection::Incomparable => "incomparable",
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {dir} |",
            d.topic.as_str(),
            d.metric_name,
            fmt_value(d.prev),
            fmt_value(d.curr),
            fmt_value(d.delta)
        );
    }
    out
}
