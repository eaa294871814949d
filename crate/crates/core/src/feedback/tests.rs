use std::sync::Arc;

use super::*;
use crate::clarify::FilterFinding;

fn finding(filter: FilterId) -> FilterFinding {
    FilterFinding {
        topic: filter.topic(),
        filter_id: filter,
        flagged: true,
        variant: "low".into(),
        metrics: [("text_ratio".to_string(), 0.5)].into_iter().collect(),
        clarification_text: "The chart shows a lack of salience in textual elements.".into(),
        artifacts: vec![],
        notes: vec![],
        context: None,
    }
}

#[test]
fn bundled_banks_validate() {
    let bank = QuestionBank::bundled();
    for f in FilterId::ALL {
        let n = bank.questions(f).len();
        assert!((9..=12).contains(&n), "{f}: {n}");
    }
    assert_eq!(
        bank.interpret(FilterId::FocusOnText),
        "Analyze the visual salience on text. Provide interpretations in 2 sentences."
    );
    assert_eq!(
        bank.suggest(FilterId::Cvd),
        "Provide suggestions about the result of the previous question in 2 sentences."
    );
    assert!(bank
        .track(Topic::Salience)
        .starts_with("Given the information, in one sentence, concisely, what are the changes made between the current and previous versions about visual salience?"));
}

#[test]
fn question_count_is_enforced() {
    let short: String = BUNDLED_QUESTIONS
        .lines()
        .filter(|l| !(l.starts_with("followup: ") && l.contains("the title")))
        .collect::<Vec<_>>()
        .join("\n");
    assert_eq!(
        QuestionBank::parse(&short),
        Err(ContentError::QuestionCount {
            filter: FilterId::Title,
            count: 2
        })
    );
    let no_track = BUNDLED_QUESTIONS
        .replace("[track]", "# removed")
        .replace("Given the information", "# removed");
    assert_eq!(QuestionBank::parse(&no_track), Err(ContentError::MissingTrack));
}

#[test]
fn grounding_preambles() {
    let salience = grounding_preamble("virtual_eyetracker").unwrap();
    assert!(salience.contains("data-ink ratio"));
    assert!(salience.starts_with("If "));
    assert_eq!(grounding_preamble("virtual_eyetracker").unwrap(), salience);
    assert_eq!(grounding_preamble("sparkle"), Err(UnknownFilter("sparkle".into())));
    let content = PromptContent::bundled();
    for f in FilterId::ALL {
        assert!(!content.preamble(f).is_empty());
        assert!(!content.condition(f).is_empty());
    }
}

#[test]
fn cond_holds_condition_metrics_and_clarification() {
    let content = PromptContent::bundled();
    let cond = build_cond(&content, &finding(FilterId::FocusOnText));
    assert!(cond.starts_with(content.condition(FilterId::FocusOnText)));
    assert!(cond.contains("Measured result: text_ratio = 0.500."));
    assert!(cond.ends_with("Clarification: The chart shows a lack of salience in textual elements."));
}

#[test]
fn echo_backend_feedback() {
    let content = PromptContent::bundled();
    let client = LlmClient::live(Arc::new(EchoLlm));
    let texts = compose_feedback(&finding(FilterId::FocusOnText), &content, &client).unwrap();
    assert_eq!(
        texts.explanations,
        "Analyze the visual salience on text. Provide interpretations in 2"
    );
    assert_eq!(
        texts.suggestions,
        "Provide suggestions about the result of the previous question in"
    );
}

#[test]
fn unextractable_chart_gets_no_suggestion() {
    let mut f = finding(FilterId::OptimalChartType);
    f.flagged = false;
    f.clarification_text =
        "No data table could be extracted from the chart image, so no chart type is suggested.".into();
    let store = Arc::new(ExchangeStore::in_memory());
    // Replay against an empty store: any LLM call would miss.
    let client = LlmClient::replay(store);
    let texts = compose_feedback(&f, &PromptContent::bundled(), &client).unwrap();
    assert_eq!(texts.explanations, f.clarification_text);
    assert_eq!(texts.suggestions, "");
}

#[test]
fn record_replay_round_trip() {
    let content = PromptContent::bundled();
    let findings: Vec<_> = FilterId::ALL.into_iter().map(finding).collect();
    let store = Arc::new(ExchangeStore::in_memory());
    let recorded = compose_all(
        &findings,
        &content,
        &LlmClient::record(Arc::new(EchoLlm), store.clone()),
    )
    .unwrap();
    // The chart-type finding has no table, so it makes no calls.
    assert_eq!(store.len(), 2 * (findings.len() - 1));
    let replayed = compose_all(&findings, &content, &LlmClient::replay(store)).unwrap();
    assert_eq!(recorded, replayed);
}

#[test]
fn replay_miss_propagates() {
    let content = PromptContent::bundled();
    let client = LlmClient::replay(Arc::new(ExchangeStore::in_memory()));
    assert!(matches!(
        compose_all(&[finding(FilterId::Title)], &content, &client),
        Err(LlmError::ReplayMiss { .. })
    ));
}
