use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GUIDELINE_CONNECTIVE: &str = "Solve the problem based on this guideline:";
pub const CURRENT_CONNECTIVE: &str = "Here are details about the current version:";
pub const PREVIOUS_CONNECTIVE: &str = "Here are details about the previous version:";

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
#[error("prompt question is empty")]
pub struct EmptyQuestion;

/// Trims each segment, drops empty ones and joins the rest with one space.
pub fn join_segments(segments: &[&str]) -> String {
    segments
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcgPrompt {
    pub question: String,
    pub cond: String,
    pub filter_suggestions: String,
    pub assembled: String,
}

/// `[Q] + guideline connective + [cond] + [filter-suggestions]`.
pub fn build_acg_prompt(question: &str, cond: &str, suggestions: &str) -> Result<AcgPrompt, EmptyQuestion> {
    if question.trim().is_empty() {
        return Err(EmptyQuestion);
    }
    Ok(AcgPrompt {
        question: question.to_string(),
        cond: cond.to_string(),
        filter_suggestions: suggestions.to_string(),
        assembled: join_segments(&[question, GUIDELINE_CONNECTIVE, cond, suggestions]),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackPrompt {
    pub question: String,
    pub curr_output: String,
    pub curr_interpretations: String,
    pub prev_output: String,
    pub prev_interpretations: String,
    pub assembled: String,
}

/// `[Q] + current connective + current output and interpretations +
/// previous connective + previous output and interpretations`.
pub fn build_track_prompt(
    question: &str,
    curr_output: &str,
    curr_interpretations: &str,
    prev_output: &str,
    prev_interpretations: &str,
) -> Result<TrackPrompt, EmptyQuestion> {
    if question.trim().is_empty() {
        return Err(EmptyQuestion);
    }
    Ok(TrackPrompt {
        question: question.to_string(),
        curr_output: curr_output.to_string(),
        curr_interpretations: curr_interpretations.to_string(),
        prev_output: prev_output.to_string(),
        prev_interpretations: prev_interpretations.to_string(),
        assembled: join_segments(&[
            question,
            CURRENT_CONNECTIVE,
            curr_output,
            curr_interpretations,
            PREVIOUS_CONNECTIVE,
            prev_output,
            prev_interpretations,
        ]),
    })
}
