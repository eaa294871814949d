//! Thresholds and analysis parameters, loadable from a TOML file.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::DEFAULT_DETECTION_FLOOR;
use crate::color::{DEFAULT_CVD_LOSS_THRESHOLD, DEFAULT_GROUPING_THRESHOLD, DEFAULT_MAX_PALETTE_ENTRIES};
use crate::ingest::DEFAULT_ANALYSIS_MAX_DIM;
use crate::saliency::{Direction, TransitionParams};
use crate::topic::FilterId;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid thresholds file: {0}")]
    Parse(String),
    #[error("invalid threshold `{name}`: {message}")]
    Invalid { name: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentileRule {
    pub percentile: u8,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClarifyConfig {
    /// Filters to run, in report order within each topic.
    pub filters: Vec<FilterId>,
    pub text_percentile: PercentileRule,
    pub center_percentile: PercentileRule,
    pub attention_percentile: PercentileRule,
    pub text_ratio_cutoff: f64,
    pub color_grouping_threshold: f64,
    pub distinct_flag_min: usize,
    pub similar_flag_min: usize,
    pub cvd_loss_threshold: f64,
    pub detection_confidence_floor: f64,
    pub transition: TransitionParams,
    pub max_palette_entries: usize,
    pub exclude_background: bool,
    /// Longest side of the copy the filters run on.
    pub analysis_max_dim: u32,
}

impl Default for ClarifyConfig {
    fn default() -> Self {
        Self {
            filters: FilterId::ALL.to_vec(),
            text_percentile: PercentileRule {
                percentile: 10,
                direction: Direction::Above,
            },
            center_percentile: PercentileRule {
                percentile: 10,
                direction: Direction::Above,
            },
            attention_percentile: PercentileRule {
                percentile: 90,
                direction: Direction::Below,
            },
            text_ratio_cutoff: 0.6,
            color_grouping_threshold: DEFAULT_GROUPING_THRESHOLD,
            distinct_flag_min: 3,
            similar_flag_min: 3,
            cvd_loss_threshold: DEFAULT_CVD_LOSS_THRESHOLD,
            detection_confidence_floor: DEFAULT_DETECTION_FLOOR,
            transition: TransitionParams::default(),
            max_palette_entries: DEFAULT_MAX_PALETTE_ENTRIES,
            exclude_background: true,
            analysis_max_dim: DEFAULT_ANALYSIS_MAX_DIM,
        }
    }
}

impl ClarifyConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Invalid {
                    name,
                    message: format!("must be positive, got {v}"),
                })
            }
        };
        positive("text_ratio_cutoff", self.text_ratio_cutoff)?;
        positive("color_grouping_threshold", self.color_grouping_threshold)?;
        positive("cvd_loss_threshold", self.cvd_loss_threshold)?;
        positive("detection_confidence_floor", self.detection_confidence_floor)?;
        positive("transition.threshold", self.transition.threshold)?;
        positive("transition.high_saliency_cutoff", self.transition.high_saliency_cutoff)?;
        positive("distinct_flag_min", self.distinct_flag_min as f64)?;
        positive("similar_flag_min", self.similar_flag_min as f64)?;
        positive("max_palette_entries", self.max_palette_entries as f64)?;
        positive("analysis_max_dim", self.analysis_max_dim as f64)?;
        for (name, rule) in [
            ("text_percentile", self.text_percentile),
            ("center_percentile", self.center_percentile),
            ("attention_percentile", self.attention_percentile),
        ] {
            if !(1..=99).contains(&rule.percentile) {
                return Err(ConfigError::Invalid {
                    name,
                    message: format!("percentile {} outside 1..=99", rule.percentile),
                });
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &self.filters {
            if !seen.insert(*f) {
                return Err(ConfigError::Invalid {
                    name: "filters",
                    message: format!("`{f}` listed twice"),
                });
            }
        }
        Ok(())
    }
}
