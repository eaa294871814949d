//! Deterministic translation of filter measurements into flagged or
//! unflagged findings with plain-language clarification text.

mod catalog;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{CatalogError, ClarificationCatalog, TemplateValue, TemplateVars, BUNDLED_CATALOG};

use crate::chart::{assemble_chart_recommendation_input, ChartTable, DetectedObject, APT_RANKING_PREAMBLE};
use crate::color::{cvd_safe_palettes, format_hex_color, ColorGroup, CvdResult};
use crate::config::{ClarifyConfig, PercentileRule};
use crate::saliency::{percentile_flag, PercentileError, ReferenceSet};
use crate::topic::{FilterId, Topic};

pub const SALIENCY_BIAS_NOTE: &str =
    "Salience is predicted by a model; its measurements may be biased or inaccurate, and the designer decides whether to trust them.";

/// Raw results of one filter.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurement {
    VirtualEyetracker {
        /// Mean of the max-normalized map.
        saliency_mass: f64,
        /// Share of pixels at or above half the peak.
        peak_fraction: f64,
    },
    FocusOnText {
        text_ratio: Option<f64>,
        saliency_zero: bool,
    },
    FocusOnCenter {
        center_fraction: f64,
        saliency_zero: bool,
    },
    FocusOnVisualAttention {
        transition_coverage: Option<f64>,
        saliency_zero: bool,
    },
    Title {
        table: ChartTable,
    },
    TextualContent {
        text_box_count: usize,
        has_text: bool,
    },
    OptimalChartType {
        table: ChartTable,
    },
    Chartjunk {
        detections: Vec<DetectedObject>,
    },
    ColorVariability {
        groups: Vec<ColorGroup>,
    },
    ColorSimilarity {
        groups: Vec<ColorGroup>,
    },
    Cvd {
        results: Vec<CvdResult>,
    },
}

impl Measurement {
    pub fn filter_id(&self) -> FilterId {
        match self {
            Measurement::VirtualEyetracker { .. } => FilterId::VirtualEyetracker,
            Measurement::FocusOnText { .. } => FilterId::FocusOnText,
            Measurement::FocusOnCenter { .. } => FilterId::FocusOnCenter,
            Measurement::FocusOnVisualAttention { .. } => FilterId::FocusOnVisualAttention,
            Measurement::Title { .. } => FilterId::Title,
            Measurement::TextualContent { .. } => FilterId::TextualContent,
            Measurement::OptimalChartType { .. } => FilterId::OptimalChartType,
            Measurement::Chartjunk { .. } => FilterId::Chartjunk,
            Measurement::ColorVariability { .. } => FilterId::ColorVariability,
            Measurement::ColorSimilarity { .. } => FilterId::ColorSimilarity,
            Measurement::Cvd { .. } => FilterId::Cvd,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterOutcome {
    Measured {
        measurement: Measurement,
        /// Paths relative to the revision directory.
        artifacts: Vec<String>,
        notes: Vec<String>,
    },
    /// The filter ran but produced nothing to judge.
    Absent { reason: String },
}

impl FilterOutcome {
    pub fn measured(measurement: Measurement) -> Self {
        FilterOutcome::Measured {
            measurement,
            artifacts: Vec::new(),
            notes: Vec::new(),
        }
    }
}

/// Outcomes of every filter for one chart.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsBundle {
    outcomes: BTreeMap<FilterId, FilterOutcome>,
}

impl MetricsBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, filter: FilterId, outcome: FilterOutcome) {
        self.outcomes.insert(filter, outcome);
    }

    pub fn with(mut self, filter: FilterId, outcome: FilterOutcome) -> Self {
        self.insert(filter, outcome);
        self
    }

    pub fn get(&self, filter: FilterId) -> Option<&FilterOutcome> {
        self.outcomes.get(&filter)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterFinding {
    pub topic: Topic,
    pub filter_id: FilterId,
    pub flagged: bool,
    /// Catalog variant the clarification came from.
    pub variant: String,
    pub metrics: BTreeMap<String, f64>,
    pub clarification_text: String,
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
    /// Extra grounding for the prompt: extracted table, detected labels,
    /// colors or palettes.
    pub context: Option<String>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClarifyError {
    #[error("metrics bundle has no entry for filter `{0}`")]
    Schema(FilterId),
    #[error("metrics bundle entry for `{expected}` holds a `{found}` measurement")]
    Mismatch { expected: FilterId, found: FilterId },
    #[error("no reference distribution for `{0}`")]
    MissingReference(String),
    #[error(transparent)]
    Percentile(#[from] PercentileError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    None,
    Yellow,
    Orange,
}

impl Status {
    pub fn glyph(self) -> &'static str {
        match self {
            Status::None => "",
            Status::Yellow => "\u{1F7E1}",
            Status::Orange => "\u{1F7E0}",
        }
    }

    pub fn from_flag_count(flagged: usize) -> Self {
        match flagged {
            0 => Status::None,
            1 => Status::Yellow,
            _ => Status::Orange,
        }
    }
}

/// One flagged finding is yellow, several are orange, none shows no dot.
pub fn section_status(findings: &[FilterFinding]) -> Status {
    Status::from_flag_count(findings.iter().filter(|f| f.flagged).count())
}

struct Clarifier<'a> {
    config: &'a ClarifyConfig,
    references: &'a ReferenceSet,
    catalog: &'a ClarificationCatalog,
}

struct Verdict {
    flagged: bool,
    variant: &'static str,
    metrics: Vec<(&'static str, f64)>,
    vars: TemplateVars,
    context: Option<String>,
}

impl Verdict {
    fn new(flagged: bool, variant: &'static str) -> Self {
        Self {
            flagged,
            variant,
            metrics: Vec::new(),
            vars: TemplateVars::new(),
            context: None,
        }
    }

    fn metric(mut self, name: &'static str, value: f64) -> Self {
        self.metrics.push((name, value));
        self.vars.insert(name.to_string(), value.into());
        self
    }

    fn var(mut self, name: &str, value: impl Into<TemplateValue>) -> Self {
        self.vars.insert(name.to_string(), value.into());
        self
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl Clarifier<'_> {
    fn percentile(&self, name: &str, value: f64, rule: PercentileRule) -> Result<(bool, f64), ClarifyError> {
        let reference = self
            .references
            .get(name)
            .ok_or_else(|| ClarifyError::MissingReference(name.to_string()))?;
        let flagged = percentile_flag(value, reference, rule.percentile, rule.direction)?;
        Ok((flagged, reference.percentile(rule.percentile)?))
    }

    fn judge(&self, m: &Measurement) -> Result<Verdict, ClarifyError> {
        let c = self.config;
        Ok(match m {
            Measurement::VirtualEyetracker {
                saliency_mass,
                peak_fraction,
            } => {
                let zero = *saliency_mass <= 0.0;
                Verdict::new(zero, if zero { "flagged" } else { "ok" })
                    .metric("saliency_mass", *saliency_mass)
                    .metric("saliency_peak_fraction", *peak_fraction)
            }
            Measurement::FocusOnText {
                text_ratio,
                saliency_zero,
            } => match text_ratio {
                _ if *saliency_zero => Verdict::new(false, "no_salience"),
                None => Verdict::new(false, "absent"),
                Some(r) if *r < c.text_ratio_cutoff => Verdict::new(true, "low")
                    .metric("text_ratio", *r)
                    .var("cutoff", c.text_ratio_cutoff),
                Some(r) => {
                    let rule = c.text_percentile;
                    let (high, reference) = self.percentile("text_ratio", *r, rule)?;
                    Verdict::new(high, if high { "high" } else { "ok" })
                        .metric("text_ratio", *r)
                        .var("percentile", rule.percentile.to_string())
                        .var("reference", reference)
                }
            },
            Measurement::FocusOnCenter {
                center_fraction,
                saliency_zero,
            } => {
                if *saliency_zero {
                    Verdict::new(false, "no_salience")
                } else {
                    let rule = c.center_percentile;
                    let (f, reference) = self.percentile("center_fraction", *center_fraction, rule)?;
                    Verdict::new(f, if f { "flagged" } else { "ok" })
                        .metric("center_fraction", *center_fraction)
                        .var("percentile", rule.percentile.to_string())
                        .var("reference", reference)
                }
            }
            Measurement::FocusOnVisualAttention {
                transition_coverage,
                saliency_zero,
            } => match transition_coverage {
                _ if *saliency_zero => Verdict::new(false, "no_salience"),
                None => Verdict::new(false, "absent"),
                Some(cov) => {
                    let rule = c.attention_percentile;
                    let (f, reference) = self.percentile("transition_coverage", *cov, rule)?;
                    Verdict::new(f, if f { "flagged" } else { "ok" })
                        .metric("transition_coverage", *cov)
                        .var("percentile", rule.percentile.to_string())
                        .var("reference", reference)
                }
            },
            Measurement::Title { table } => {
                let present = crate::chart::detect_title(table).present;
                let mut v = if !table.extraction_ok {
                    Verdict::new(false, "unknown")
                } else {
                    Verdict::new(!present, if present { "ok" } else { "flagged" })
                };
                v = v
                    .metric("title_present", flag(present))
                    .metric("extraction_ok", flag(table.extraction_ok));
                if table.extraction_ok {
                    let mut ctx = match &table.title {
                        Some(t) if present => format!("Detected title: \"{}\".", t.trim()),
                        _ => "No title was detected.".to_string(),
                    };
                    ctx.push_str(" Data table extracted from the chart:\n");
                    ctx.push_str(table.to_tsv().trim_end());
                    v.context = Some(ctx);
                }
                v
            }
            Measurement::TextualContent {
                text_box_count,
                has_text,
            } => Verdict::new(!has_text, if *has_text { "ok" } else { "flagged" })
                .metric("text_box_count", *text_box_count as f64)
                .metric("has_text", flag(*has_text)),
            Measurement::OptimalChartType { table } => {
                let input = assemble_chart_recommendation_input(table, APT_RANKING_PREAMBLE);
                let mut v = Verdict::new(false, if input.is_some() { "ok" } else { "unknown" })
                    .metric("extraction_ok", flag(table.extraction_ok))
                    .metric("row_count", table.rows.len() as f64)
                    .metric("column_count", table.columns.len() as f64);
                v.context = input;
                v
            }
            Measurement::Chartjunk { detections } => {
                let mut labels: Vec<&str> = detections.iter().map(|d| d.label.as_str()).collect();
                labels.sort_unstable();
                labels.dedup();
                let found = !detections.is_empty();
                let mut v = Verdict::new(found, if found { "flagged" } else { "ok" })
                    .metric("detection_count", detections.len() as f64)
                    .var("labels", labels.join(", "));
                if found {
                    v.context = Some(format!("Detected objects: {}.", labels.join(", ")));
                }
                v
            }
            Measurement::ColorVariability { groups } => {
                let r = crate::color::color_variability(groups, c.distinct_flag_min);
                let colors: Vec<String> = groups.iter().map(|g| format_hex_color(g.centroid)).collect();
                let mut v = Verdict::new(r.multiple_colors, if r.multiple_colors { "flagged" } else { "ok" })
                    .metric("distinct_count", r.distinct_count as f64)
                    .metric("multiple_colors", flag(r.multiple_colors));
                if !colors.is_empty() {
                    v.context = Some(format!("Distinct colors (group centroids): {}.", colors.join(" ")));
                }
                v
            }
            Measurement::ColorSimilarity { groups } => {
                let r = crate::color::color_similarity(groups, c.similar_flag_min);
                let similar: Vec<String> = groups
                    .iter()
                    .filter(|g| g.members.len() >= 2)
                    .map(|g| {
                        let members: Vec<String> = g.members.iter().map(|&m| format_hex_color(m)).collect();
                        format!("[{}]", members.join(" "))
                    })
                    .collect();
                let mut v = Verdict::new(r.similar_colors, if r.similar_colors { "flagged" } else { "ok" })
                    .metric("similar_group_count", r.similar_group_count as f64)
                    .metric("similar_colors", flag(r.similar_colors));
                if !similar.is_empty() {
                    v.context = Some(format!("Groups of similar colors: {}.", similar.join(" ")));
                }
                v
            }
            Measurement::Cvd { results } => {
                let mut v = Verdict::new(false, "ok");
                let mut max_loss: f64 = 0.0;
                let mut affected = Vec::new();
                let mut entropy = 0.0;
                for r in results {
                    let name: &'static str = match r.deficiency {
                        crate::color::Deficiency::Deuteranopia => "deuteranopia_loss",
                        crate::color::Deficiency::Protanopia => "protanopia_loss",
                        crate::color::Deficiency::Tritanopia => "tritanopia_loss",
                    };
                    v = v.metric(name, r.relative_loss);
                    max_loss = max_loss.max(r.relative_loss);
                    entropy = r.entropy_original;
                    if r.relative_loss > c.cvd_loss_threshold {
                        affected.push(r.deficiency.as_str());
                    }
                }
                let flagged = !affected.is_empty();
                v = v
                    .metric("entropy_original", entropy)
                    .metric("max_relative_loss", max_loss)
                    .var("affected", affected.join(", "));
                v.flagged = flagged;
                v.variant = if flagged { "flagged" } else { "ok" };
                let palettes: Vec<String> = cvd_safe_palettes()
                    .iter()
                    .map(|p| {
                        let colors: Vec<String> = p.colors.iter().map(|&c| format_hex_color(c)).collect();
                        format!("{}: {}", p.name, colors.join(" "))
                    })
                    .collect();
                v.context = Some(format!("Recommended CVD-safe palettes:\n{}", palettes.join("\n")));
                v
            }
        })
    }

    fn clarify(&self, filter: FilterId, outcome: &FilterOutcome) -> Result<FilterFinding, ClarifyError> {
        let (verdict, artifacts, notes) = match outcome {
            FilterOutcome::Absent { reason } => {
                let v = Verdict::new(false, "absent").var("reason", reason.as_str());
                let text = self.catalog.render("absent", &v.vars)?;
                return Ok(FilterFinding {
                    topic: filter.topic(),
                    filter_id: filter,
                    flagged: false,
                    variant: "absent".into(),
                    metrics: BTreeMap::new(),
                    clarification_text: text,
                    artifacts: Vec::new(),
                    notes: Vec::new(),
                    context: None,
                });
            }
            FilterOutcome::Measured {
                measurement,
                artifacts,
                notes,
            } => {
                if measurement.filter_id() != filter {
                    return Err(ClarifyError::Mismatch {
                        expected: filter,
                        found: measurement.filter_id(),
                    });
                }
                (self.judge(measurement)?, artifacts, notes)
            }
        };
        let key = if verdict.variant == "no_salience" {
            "no_salience".to_string()
        } else {
            format!("{}.{}", filter.as_str(), verdict.variant)
        };
        let clarification_text = self.catalog.render(&key, &verdict.vars)?;
        let mut notes = notes.clone();
        if filter.topic() == Topic::Salience {
            notes.push(SALIENCY_BIAS_NOTE.to_string());
        }
        Ok(FilterFinding {
            topic: filter.topic(),
            filter_id: filter,
            flagged: verdict.flagged,
            variant: verdict.variant.to_string(),
            metrics: verdict.metrics.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            clarification_text,
            artifacts: artifacts.clone(),
            notes,
            context: verdict.context,
        })
    }
}

/// One finding per configured filter, ordered by topic and filter.
pub fn clarify_all(
    bundle: &MetricsBundle,
    config: &ClarifyConfig,
    references: &ReferenceSet,
    catalog: &ClarificationCatalog,
) -> Result<Vec<FilterFinding>, ClarifyError> {
    let clarifier = Clarifier {
        config,
        references,
        catalog,
    };
    let mut filters = config.filters.clone();
    filters.sort();
    filters.dedup();
    filters
        .into_iter()
        .map(|f| {
            let outcome = bundle.get(f).ok_or(ClarifyError::Schema(f))?;
            clarifier.clarify(f, outcome)
        })
        .collect()
}
