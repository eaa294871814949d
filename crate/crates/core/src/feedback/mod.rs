//! Prompt assembly and LLM-written Explanations and Suggestions.

pub mod llm;
mod prompt;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use llm::{EchoLlm, ExchangeStore, HttpLlm, LlmBackend, LlmClient, LlmError, LlmExchange, LlmMode, LlmRequest};
pub use prompt::{
    build_acg_prompt, build_track_prompt, join_segments, AcgPrompt, EmptyQuestion, TrackPrompt, CURRENT_CONNECTIVE,
    GUIDELINE_CONNECTIVE, PREVIOUS_CONNECTIVE,
};

use crate::clarify::FilterFinding;
use crate::topic::{FilterId, Topic, UnknownFilter};

pub const BUNDLED_QUESTIONS: &str = include_str!("../../content/questions.txt");
pub const BUNDLED_PREAMBLES: &str = include_str!("../../content/preambles.txt");
pub const BUNDLED_CONDITIONS: &str = include_str!("../../content/conditions.txt");

/// System message sent with every request.
pub const SYSTEM_PREAMBLE: &str = "You are an assistant to a visualization designer. Answer only from the \
measured results, clarifications and design knowledge given in the prompt. Keep to the requested number of \
sentences. Use plain language for novice designers.";

pub const MIN_QUESTIONS: usize = 9;
pub const MAX_QUESTIONS: usize = 12;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ContentError {
    #[error("{file} line {line}: {message}")]
    Syntax {
        file: &'static str,
        line: usize,
        message: String,
    },
    #[error("{file}: no entry for filter `{filter}`")]
    Missing { file: &'static str, filter: FilterId },
    #[error("question bank for `{filter}` has {count} questions, expected {MIN_QUESTIONS} to {MAX_QUESTIONS}")]
    QuestionCount { filter: FilterId, count: usize },
    #[error("question bank for `{filter}` lacks a `{role}` question")]
    MissingRole { filter: FilterId, role: &'static str },
    #[error("question bank has no tracking question")]
    MissingTrack,
}

/// Splits `[section]` headed text into sections of non-comment lines.
/// Section name with its numbered lines.
type Section = (String, Vec<(usize, String)>);

fn sections(text: &str, file: &'static str) -> Result<Vec<Section>, ContentError> {
    let mut out: Vec<(String, Vec<(usize, String)>)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            out.push((name.trim().to_string(), Vec::new()));
            continue;
        }
        match out.last_mut() {
            Some((_, lines)) => lines.push((idx + 1, line.to_string())),
            None => {
                return Err(ContentError::Syntax {
                    file,
                    line: idx + 1,
                    message: "text before the first [section]".into(),
                })
            }
        }
    }
    Ok(out)
}

fn filter_of(name: &str, line: usize, file: &'static str) -> Result<FilterId, ContentError> {
    name.parse().map_err(|e: UnknownFilter| ContentError::Syntax {
        file,
        line,
        message: e.to_string(),
    })
}

/// Per-filter texts where each section's lines are joined with spaces.
fn parse_texts(text: &str, file: &'static str) -> Result<BTreeMap<FilterId, String>, ContentError> {
    let mut out = BTreeMap::new();
    for (name, lines) in sections(text, file)? {
        let line = lines.first().map_or(0, |l| l.0);
        let filter = filter_of(&name, line, file)?;
        let joined: Vec<&str> = lines.iter().map(|(_, l)| l.as_str()).collect();
        out.insert(filter, joined.join(" "));
    }
    for f in FilterId::ALL {
        if !out.contains_key(&f) {
            return Err(ContentError::Missing { file, filter: f });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionRole {
    Interpret,
    Suggest,
    Followup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub role: QuestionRole,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionBank {
    per_filter: BTreeMap<FilterId, Vec<Question>>,
    track: String,
}

impl QuestionBank {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_QUESTIONS).expect("bundled question bank is valid")
    }

    /// Parses and validates: every filter needs 9 to 12 questions including
    /// an `interpret` and a `suggest` one.
    pub fn parse(text: &str) -> Result<Self, ContentError> {
        const FILE: &str = "questions";
        let mut per_filter = BTreeMap::new();
        let mut track = None;
        for (name, lines) in sections(text, FILE)? {
            if name == "track" {
                let joined: Vec<&str> = lines.iter().map(|(_, l)| l.as_str()).collect();
                track = Some(joined.join(" "));
                continue;
            }
            let filter = filter_of(&name, lines.first().map_or(0, |l| l.0), FILE)?;
            let mut questions = Vec::new();
            for (line, text) in lines {
                let (role, q) = text.split_once(':').ok_or_else(|| ContentError::Syntax {
                    file: FILE,
                    line,
                    message: "expected `role: question`".into(),
                })?;
                let role = match role.trim() {
                    "interpret" => QuestionRole::Interpret,
                    "suggest" => QuestionRole::Suggest,
                    "followup" => QuestionRole::Followup,
                    other => {
                        return Err(ContentError::Syntax {
                            file: FILE,
                            line,
                            message: format!("unknown role `{other}`"),
                        })
                    }
                };
                questions.push(Question {
                    role,
                    text: q.trim().to_string(),
                });
            }
            per_filter.insert(filter, questions);
        }
        for f in FilterId::ALL {
            let qs = per_filter
                .get(&f)
                .ok_or(ContentError::Missing { file: FILE, filter: f })?;
            if !(MIN_QUESTIONS..=MAX_QUESTIONS).contains(&qs.len()) {
                return Err(ContentError::QuestionCount {
                    filter: f,
                    count: qs.len(),
                });
            }
            for (role, name) in [
                (QuestionRole::Interpret, "interpret"),
                (QuestionRole::Suggest, "suggest"),
            ] {
                if !qs.iter().any(|q| q.role == role) {
                    return Err(ContentError::MissingRole { filter: f, role: name });
                }
            }
        }
        Ok(Self {
            per_filter,
            track: track.ok_or(ContentError::MissingTrack)?,
        })
    }

    pub fn questions(&self, filter: FilterId) -> &[Question] {
        &self.per_filter[&filter]
    }

    fn first(&self, filter: FilterId, role: QuestionRole) -> &str {
        &self
            .questions(filter)
            .iter()
            .find(|q| q.role == role)
            .expect("validated")
            .text
    }

    pub fn interpret(&self, filter: FilterId) -> &str {
        self.first(filter, QuestionRole::Interpret)
    }

    pub fn suggest(&self, filter: FilterId) -> &str {
        self.first(filter, QuestionRole::Suggest)
    }

    /// The tracking question with the topic phrase substituted.
    pub fn track(&self, topic: Topic) -> String {
        self.track.replace("{topic}", topic.phrase())
    }
}

/// Design-knowledge preambles ([filter-suggestions]) and interpretation
/// conditions for every filter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptContent {
    pub questions: QuestionBank,
    preambles: BTreeMap<FilterId, String>,
    conditions: BTreeMap<FilterId, String>,
}

impl PromptContent {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_QUESTIONS, BUNDLED_PREAMBLES, BUNDLED_CONDITIONS).expect("bundled prompt content is valid")
    }

    pub fn parse(questions: &str, preambles: &str, conditions: &str) -> Result<Self, ContentError> {
        Ok(Self {
            questions: QuestionBank::parse(questions)?,
            preambles: parse_texts(preambles, "preambles")?,
            conditions: parse_texts(conditions, "conditions")?,
        })
    }

    pub fn preamble(&self, filter: FilterId) -> &str {
        &self.preambles[&filter]
    }

    pub fn condition(&self, filter: FilterId) -> &str {
        &self.conditions[&filter]
    }
}

/// The bundled design-knowledge preamble for a filter name.
pub fn grounding_preamble(filter_id: &str) -> Result<String, UnknownFilter> {
    let filter: FilterId = filter_id.parse()?;
    Ok(PromptContent::bundled().preamble(filter).to_string())
}

/// `name = value` pairs with three decimals, in schema order.
pub fn format_metrics(metrics: &BTreeMap<String, f64>, filter: FilterId) -> String {
    filter
        .metric_schema()
        .iter()
        .filter_map(|name| metrics.get(*name).map(|v| format!("{name} = {v:.3}")))
        .collect::<Vec<_>>()
        .join("; ")
}

/// The [cond] segment: condition text, measured result, clarification and
/// any filter-specific context.
pub fn build_cond(content: &PromptContent, finding: &FilterFinding) -> String {
    let metrics = format_metrics(&finding.metrics, finding.filter_id);
    let measured = if metrics.is_empty() {
        String::new()
    } else {
        format!("Measured result: {metrics}.")
    };
    let clarification = format!("Clarification: {}", finding.clarification_text);
    join_segments(&[
        content.condition(finding.filter_id),
        &measured,
        &clarification,
        finding.context.as_deref().unwrap_or(""),
    ])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackTexts {
    pub explanations: String,
    pub suggestions: String,
}

/// Explanations from the interpret question, then Suggestions from the
/// suggest question with the explanation as the previous answer.
pub fn compose_feedback(
    finding: &FilterFinding,
    content: &PromptContent,
    client: &LlmClient,
) -> Result<FeedbackTexts, LlmError> {
    let filter = finding.filter_id;
    if filter == FilterId::OptimalChartType && finding.context.is_none() {
        return Ok(FeedbackTexts {
            explanations: finding.clarification_text.clone(),
            suggestions: String::new(),
        });
    }
    let cond = build_cond(content, finding);
    let preamble = content.preamble(filter);
    let interpret =
        build_acg_prompt(content.questions.interpret(filter), &cond, preamble).expect("bundled questions are nonempty");
    let explanations = client.generate(&LlmRequest::new(SYSTEM_PREAMBLE, &interpret.assembled))?;
    let followup_cond = join_segments(&[&cond, "Previous answer:", &explanations]);
    let suggest = build_acg_prompt(content.questions.suggest(filter), &followup_cond, preamble)
        .expect("bundled questions are nonempty");
    let suggestions = client.generate(&LlmRequest::new(SYSTEM_PREAMBLE, &suggest.assembled))?;
    Ok(FeedbackTexts {
        explanations,
        suggestions,
    })
}

/// Feedback for every finding, filters running concurrently (the client
/// bounds in-flight requests). The first error in filter order wins.
pub fn compose_all(
    findings: &[FilterFinding],
    content: &PromptContent,
    client: &LlmClient,
) -> Result<BTreeMap<FilterId, FeedbackTexts>, LlmError> {
    let results: Vec<(FilterId, Result<FeedbackTexts, LlmError>)> = std::thread::scope(|s| {
        let handles: Vec<_> = findings
            .iter()
            .map(|f| (f.filter_id, s.spawn(move || compose_feedback(f, content, client))))
            .collect();
        handles
            .into_iter()
            .map(|(id, h)| (id, h.join().expect("feedback thread panicked")))
            .collect()
    });
    let mut out = BTreeMap::new();
    for (id, r) in results {
        out.insert(id, r?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
