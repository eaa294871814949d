use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reference samples shipped with the crate, regenerated from the synthetic
/// chart corpus by `vizcritique gen-references`.
pub const BUNDLED_REFERENCES: &str = include_str!("../../content/reference_distributions.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Above,
    Below,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PercentileError {
    #[error("reference distribution `{0}` is empty")]
    EmptyReference(String),
    #[error("percentile {0} outside 1..=99")]
    InvalidPercentile(u8),
}

/// Per-image values of one metric over a reference corpus, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDistribution {
    metric_name: String,
    samples: Vec<f64>,
}

impl ReferenceDistribution {
    pub fn new(metric_name: impl Into<String>, mut samples: Vec<f64>) -> Result<Self, PercentileError> {
        let metric_name = metric_name.into();
        samples.retain(|v| v.is_finite());
        if samples.is_empty() {
            return Err(PercentileError::EmptyReference(metric_name));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { metric_name, samples })
    }

    pub fn metric_name(&self) -> &str {
        &self.metric_name
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Nearest-rank percentile: `samples[ceil(p/100 * n) - 1]`.
    pub fn percentile(&self, percentile: u8) -> Result<f64, PercentileError> {
        if !(1..=99).contains(&percentile) {
            return Err(PercentileError::InvalidPercentile(percentile));
        }
        let n = self.samples.len();
        let rank = (percentile as usize * n).div_ceil(100);
        Ok(self.samples[rank.max(1) - 1])
    }
}

/// Whether `metric` lies strictly above (or below) the given percentile of
/// the reference samples.
pub fn percentile_flag(
    metric: f64,
    reference: &ReferenceDistribution,
    percentile: u8,
    direction: Direction,
) -> Result<bool, PercentileError> {
    let p = reference.percentile(percentile)?;
    Ok(match direction {
        Direction::Above => metric > p,
        Direction::Below => metric < p,
    })
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("reference file line {line}: {message}")]
pub struct ReferenceParseError {
    pub line: usize,
    pub message: String,
}

/// Named reference distributions, serialized as one `name: v1 v2 ...` line per
/// metric. `#` starts a comment line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceSet {
    distributions: BTreeMap<String, ReferenceDistribution>,
}

impl ReferenceSet {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_REFERENCES).expect("bundled reference file is well formed")
    }

    pub fn parse(text: &str) -> Result<Self, ReferenceParseError> {
        let mut distributions = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ReferenceParseError { line: idx + 1, message };
            let (name, values) = line
                .split_once(':')
                .ok_or_else(|| err("expected `name: values`".into()))?;
            let samples = values
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| err(format!("bad value `{v}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let dist = ReferenceDistribution::new(name.trim(), samples).map_err(|e| err(e.to_string()))?;
            distributions.insert(name.trim().to_string(), dist);
        }
        Ok(Self { distributions })
    }

    pub fn insert(&mut self, dist: ReferenceDistribution) {
        self.distributions.insert(dist.metric_name.clone(), dist);
    }

    pub fn get(&self, metric_name: &str) -> Option<&ReferenceDistribution> {
        self.distributions.get(metric_name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReferenceDistribution> {
        self.distributions.values()
    }

    /// Serializes with a free-form comment header (each line gets `# `).
    pub fn to_text(&self, header: &str) -> String {
        let mut out = String::new();
        for line in header.lines() {
            let _ = writeln!(out, "# {line}");
        }
        for dist in self.distributions.values() {
            out.push_str(&dist.metric_name);
            out.push(':');
            for v in &dist.samples {
                let _ = write!(out, " {v:.9}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_to_ten() -> ReferenceDistribution {
        ReferenceDistribution::new("m", (1..=10).map(f64::from).collect()).unwrap()
    }

    #[test]
    fn nearest_rank_examples() {
        let r = one_to_ten();
        assert_eq!(r.percentile(90).unwrap(), 9.0);
        assert_eq!(r.percentile(10).unwrap(), 1.0);
        assert_eq!(r.percentile(11).unwrap(), 2.0);
        assert!(percentile_flag(9.5, &r, 90, Direction::Above).unwrap());
        for p in [1, 10, 50, 99] {
            assert!(!percentile_flag(0.5, &r, p, Direction::Above).unwrap());
        }
        assert!(percentile_flag(0.5, &r, 90, Direction::Below).unwrap());
    }

    #[test]
    fn empty_and_invalid() {
        assert_eq!(
            ReferenceDistribution::new("x", vec![]),
            Err(PercentileError::EmptyReference("x".into()))
        );
        assert!(one_to_ten().percentile(0).is_err());
        assert!(one_to_ten().percentile(100).is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut set = ReferenceSet::default();
        set.insert(ReferenceDistribution::new("b", vec![0.5, 0.25]).unwrap());
        set.insert(ReferenceDistribution::new("a", vec![1.0]).unwrap());
        let text = set.to_text("generated\nby test");
        assert!(text.starts_with("# generated\n# by test\na: 1.000000000\n"));
        assert_eq!(ReferenceSet::parse(&text).unwrap(), set);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = ReferenceSet::parse("# c\nfoo 1 2\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = ReferenceSet::parse("foo: 1 x\n").unwrap_err();
        assert_eq!(e.line, 1);
    }

    #[test]
    fn bundled_file_has_the_saliency_metrics() {
        let set = ReferenceSet::bundled();
        for name in ["text_ratio", "center_fraction", "transition_coverage"] {
            assert!(set.get(name).is_some(), "missing {name}");
        }
    }
}
