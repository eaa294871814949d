//! Report topics and the filters grouped under them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Report sections, in display order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topic {
    Salience,
    Text,
    Representation,
    Color,
    Accessibility,
}

impl Topic {
    pub const ALL: [Topic; 5] = [
        Topic::Salience,
        Topic::Text,
        Topic::Representation,
        Topic::Color,
        Topic::Accessibility,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Salience => "salience",
            Topic::Text => "text",
            Topic::Representation => "representation",
            Topic::Color => "color",
            Topic::Accessibility => "accessibility",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Topic::Salience => "Salience",
            Topic::Text => "Text",
            Topic::Representation => "Visual representation",
            Topic::Color => "Color",
            Topic::Accessibility => "Accessibility",
        }
    }

    /// Noun phrase used when the topic is substituted into question templates.
    pub fn phrase(self) -> &'static str {
        match self {
            Topic::Salience => "visual salience",
            Topic::Text => "textual elements",
            Topic::Representation => "visual representation",
            Topic::Color => "color usage",
            Topic::Accessibility => "color blindness accessibility",
        }
    }

    pub fn filters(self) -> impl Iterator<Item = FilterId> {
        FilterId::ALL.into_iter().filter(move |f| f.topic() == self)
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unknown filter `{0}`")]
pub struct UnknownFilter(pub String);

/// Every perceptual filter the engine runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterId {
    VirtualEyetracker,
    FocusOnText,
    FocusOnCenter,
    FocusOnVisualAttention,
    Title,
    TextualContent,
    OptimalChartType,
    Chartjunk,
    ColorVariability,
    ColorSimilarity,
    Cvd,
}

impl FilterId {
    pub const ALL: [FilterId; 11] = [
        FilterId::VirtualEyetracker,
        FilterId::FocusOnText,
        FilterId::FocusOnCenter,
        FilterId::FocusOnVisualAttention,
        FilterId::Title,
        FilterId::TextualContent,
        FilterId::OptimalChartType,
        FilterId::Chartjunk,
        FilterId::ColorVariability,
        FilterId::ColorSimilarity,
        FilterId::Cvd,
    ];

    pub fn topic(self) -> Topic {
        use FilterId::*;
        match self {
            VirtualEyetracker | FocusOnText | FocusOnCenter | FocusOnVisualAttention => Topic::Salience,
            Title | TextualContent => Topic::Text,
            OptimalChartType | Chartjunk => Topic::Representation,
            ColorVariability | ColorSimilarity => Topic::Color,
            Cvd => Topic::Accessibility,
        }
    }

    pub fn as_str(self) -> &'static str {
        use FilterId::*;
        match self {
            VirtualEyetracker => "virtual_eyetracker",
            FocusOnText => "focus_on_text",
            FocusOnCenter => "focus_on_center",
            FocusOnVisualAttention => "focus_on_visual_attention",
            Title => "title",
            TextualContent => "textual_content",
            OptimalChartType => "optimal_chart_type",
            Chartjunk => "chartjunk",
            ColorVariability => "color_variability",
            ColorSimilarity => "color_similarity",
            Cvd => "cvd",
        }
    }

    pub fn title(self) -> &'static str {
        use FilterId::*;
        match self {
            VirtualEyetracker => "Virtual eyetracker",
            FocusOnText => "Focus on text",
            FocusOnCenter => "Focus on center",
            FocusOnVisualAttention => "Focus on visual attention",
            Title => "Title",
            TextualContent => "Textual content",
            OptimalChartType => "Optimal chart type",
            Chartjunk => "Visual embellishment (chartjunk)",
            ColorVariability => "Variability of colors",
            ColorSimilarity => "Similarity of colors",
            Cvd => "Color vision deficiency",
        }
    }

    /// Metric names a finding for this filter may carry.
    pub fn metric_schema(self) -> &'static [&'static str] {
        use FilterId::*;
        match self {
            VirtualEyetracker => &["saliency_mass", "saliency_peak_fraction"],
            FocusOnText => &["text_ratio"],
            FocusOnCenter => &["center_fraction"],
            FocusOnVisualAttention => &["transition_coverage"],
            Title => &["title_present", "extraction_ok"],
            TextualContent => &["text_box_count", "has_text"],
            OptimalChartType => &["extraction_ok", "row_count", "column_count"],
            Chartjunk => &["detection_count"],
            ColorVariability => &["distinct_count", "multiple_colors"],
            ColorSimilarity => &["similar_group_count", "similar_colors"],
            Cvd => &[
                "deuteranopia_loss",
                "protanopia_loss",
                "tritanopia_loss",
                "entropy_original",
                "max_relative_loss",
            ],
        }
    }
}

impl fmt::Display for FilterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterId {
    type Err = UnknownFilter;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FilterId::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| UnknownFilter(s.to_string()))
    }
}
