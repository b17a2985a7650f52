//! Stage 2: score the candidate set against the observation and return the
//! argmax intention.
//!
//! Two modes: `generative_label` parses an emitted answer letter/text back to
//! a candidate index; `likelihood` scores each candidate's answer-letter
//! continuation and takes the argmax, ties resolving to the lowest index.

use std::collections::BTreeMap;

use crate::backend::{BackendError, BackendRequest, ChatBackend, ScoredChoice};
use crate::dataset::DatasetError;
use crate::proposer::stage_messages;
use crate::template::{load_retry_template, load_template, PromptTemplate, TemplateError};
use crate::types::{
    argmax_lowest_index, normalize_text, CandidateSet, IntentionPrediction, ObservationSample,
    RunConfig, SelectionMode,
};

/// Extra backend calls allowed when the reply maps to no candidate.
pub const MAX_REPROMPTS: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SelectError {
    #[error("reply maps to no candidate: {raw_output:?}")]
    NoMatch { raw_output: String },
    #[error("selection parsing failed after {attempts} attempts (last output: {last_output:?})")]
    ParseFailure { attempts: u32, last_output: String },
    #[error("cannot select from an empty candidate set")]
    EmptyCandidates,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Media(#[from] DatasetError),
}

/// Main and re-prompt templates for the selection stage.
#[derive(Debug, Clone)]
pub struct SelectorTemplates {
    pub main: PromptTemplate,
    pub retry: PromptTemplate,
}

impl SelectorTemplates {
    pub fn load(cfg: &RunConfig) -> Result<Self, TemplateError> {
        let dir = cfg.templates.dir.as_deref();
        let main = load_template(dir, &cfg.templates.select)?;
        main.require(&["query", "options"])?;
        let retry = load_retry_template(dir, &cfg.templates.select, "select_retry")?;
        retry.require(&["query", "options"])?;
        Ok(SelectorTemplates { main, retry })
    }
}

/// Answer letter of the candidate at `index`.
pub fn answer_letter(index: usize) -> char {
    debug_assert!(index < 26);
    (b'A' + index as u8) as char
}

/// The lettered options block of the multiple-choice prompt.
pub fn options_block(cands: &CandidateSet) -> String {
    cands
        .candidates
        .iter()
        .enumerate()
        .map(|(i, text)| format!("{}. {}", answer_letter(i), text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Maps a model reply to a candidate index. Resolution order:
/// 1. leading standalone answer letter within the candidate range,
/// 2. exact candidate text,
/// 3. normalized candidate text,
/// 4. unique normalized-substring containment.
pub fn parse_selection(raw: &str, cands: &CandidateSet) -> Result<usize, SelectError> {
    let no_match = || SelectError::NoMatch { raw_output: raw.to_string() };
    if cands.is_empty() {
        return Err(no_match());
    }

    if let Some(index) = leading_letter_index(raw) {
        if index < cands.len() {
            return Ok(index);
        }
    }

    let trimmed = raw.trim();
    if let Some(index) = cands.candidates.iter().position(|c| c == trimmed) {
        return Ok(index);
    }

    let norm_raw = normalize_text(raw);
    if let Some(index) = cands.candidates.iter().position(|c| normalize_text(c) == norm_raw) {
        return Ok(index);
    }

    let contained: Vec<usize> = cands
        .candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            let key = normalize_text(c);
            !key.is_empty() && norm_raw.contains(&key)
        })
        .map(|(i, _)| i)
        .collect();
    match contained.as_slice() {
        [index] => Ok(*index),
        _ => Err(no_match()),
    }
}

/// Index of a leading standalone letter like `B`, `b)`, `(C)` or `D.`;
/// `None` when the reply starts with a longer word.
fn leading_letter_index(raw: &str) -> Option<usize> {
    let s = raw.trim_start().strip_prefix('(').unwrap_or_else(|| raw.trim_start());
    let mut chars = s.chars();
    let first = chars.next()?;
    if !first.is_ascii_alphabetic() {
        return None;
    }
    match chars.next() {
        None => {}
        Some(next) if next.is_alphanumeric() => return None,
        Some(_) => {}
    }
    Some((first.to_ascii_uppercase() as u8 - b'A') as usize)
}

/// Scores each candidate as the log-probability of its answer-letter
/// continuation under the shared multiple-choice prompt. Requires a backend
/// with logprob capability; one finite score per candidate.
pub fn score_candidates(
    sample: &ObservationSample,
    cands: &CandidateSet,
    cfg: &RunConfig,
    backend: &dyn ChatBackend,
    template: &PromptTemplate,
) -> Result<Vec<f64>, SelectError> {
    if cands.is_empty() {
        return Err(SelectError::EmptyCandidates);
    }
    if !backend.supports_logprobs() {
        return Err(SelectError::Backend(BackendError::CapabilityMissing(format!(
            "backend {:?} does not advertise logprobs",
            backend.id()
        ))));
    }
    let request = choice_request(sample, cands, cfg, backend, template, true)?;
    let choices: Vec<ScoredChoice> = cands
        .candidates
        .iter()
        .enumerate()
        .map(|(i, text)| ScoredChoice { letter: answer_letter(i), text: text.clone() })
        .collect();
    let scores = backend.score_choices(&request, &choices)?;
    if scores.len() != cands.len() {
        return Err(SelectError::Backend(BackendError::MalformedResponse(format!(
            "expected {} choice scores, got {}",
            cands.len(),
            scores.len()
        ))));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(SelectError::Backend(BackendError::MalformedResponse(format!(
            "non-finite choice score {bad}"
        ))));
    }
    Ok(scores)
}

fn choice_request(
    sample: &ObservationSample,
    cands: &CandidateSet,
    cfg: &RunConfig,
    backend: &dyn ChatBackend,
    template: &PromptTemplate,
    want_logprobs: bool,
) -> Result<BackendRequest, SelectError> {
    let bindings = BTreeMap::from([
        ("query", sample.query.clone()),
        ("options", options_block(cands)),
        ("k", cands.len().to_string()),
    ]);
    let user_text = template.render_user(&bindings)?;
    let messages =
        stage_messages(&template.system_text, user_text, &sample.media, cfg.frames_per_video)?;
    let mut request =
        BackendRequest::new(backend.model_id(), messages).with_decoding(cfg.decoding.clone());
    request.want_logprobs = want_logprobs;
    Ok(request)
}

/// Stage 2: picks the most plausible candidate. Single-candidate sets return
/// immediately without a backend call.
pub fn select(
    sample: &ObservationSample,
    cands: &CandidateSet,
    cfg: &RunConfig,
    backend: &dyn ChatBackend,
    templates: &SelectorTemplates,
) -> Result<IntentionPrediction, SelectError> {
    if cands.is_empty() {
        return Err(SelectError::EmptyCandidates);
    }
    if cands.len() == 1 {
        return Ok(IntentionPrediction {
            selected_index: 0,
            selected_text: cands.candidates[0].clone(),
            scores: None,
            mode: cfg.selection_mode,
            raw_model_output: None,
        });
    }

    match cfg.selection_mode {
        SelectionMode::Likelihood => {
            let scores = score_candidates(sample, cands, cfg, backend, &templates.main)?;
            let selected_index = argmax_lowest_index(&scores).expect("non-empty scores");
            Ok(IntentionPrediction {
                selected_index,
                selected_text: cands.candidates[selected_index].clone(),
                scores: Some(scores),
                mode: SelectionMode::Likelihood,
                raw_model_output: None,
            })
        }
        SelectionMode::GenerativeLabel => {
            let mut last_output = String::new();
            for attempt in 0..=MAX_REPROMPTS {
                let template = if attempt == 0 { &templates.main } else { &templates.retry };
                let request = choice_request(sample, cands, cfg, backend, template, false)?;
                let response = backend.complete(&request)?;
                last_output = response.text;
                match parse_selection(&last_output, cands) {
                    Ok(selected_index) => {
                        return Ok(IntentionPrediction {
                            selected_index,
                            selected_text: cands.candidates[selected_index].clone(),
                            scores: None,
                            mode: SelectionMode::GenerativeLabel,
                            raw_model_output: Some(last_output),
                        })
                    }
                    Err(SelectError::NoMatch { .. }) => continue,
                    Err(other) => return Err(other),
                }
            }
            Err(SelectError::ParseFailure { attempts: MAX_REPROMPTS + 1, last_output })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock::mock_script;
    use crate::types::{CandidateOrigin, Category, MediaRef, RunMode};
    use proptest::prelude::*;

    fn sample() -> ObservationSample {
        ObservationSample {
            id: "q1".into(),
            media: MediaRef::video("vid_001"),
            query: "what does she want?".into(),
            options: None,
            ground_truth: None,
            category: Category::CH,
        }
    }

    fn cands(texts: &[&str]) -> CandidateSet {
        CandidateSet {
            candidates: texts.iter().map(|t| t.to_string()).collect(),
            origin: CandidateOrigin::Stage1Generated,
            raw_model_output: None,
        }
    }

    fn cfg(mode: SelectionMode) -> RunConfig {
        let mut cfg = RunConfig::new(RunMode::OpenTwoStep);
        cfg.selection_mode = mode;
        cfg
    }

    fn templates() -> SelectorTemplates {
        SelectorTemplates::load(&cfg(SelectionMode::GenerativeLabel)).unwrap()
    }

    #[test]
    fn letter_reply_maps_to_index() {
        let set = cands(&["a", "b", "c", "d", "e"]);
        let backend =
            mock_script(BTreeMap::from([("what does she want?".to_string(), "C".to_string())]));
        let pred =
            select(&sample(), &set, &cfg(SelectionMode::GenerativeLabel), &backend, &templates())
                .unwrap();
        assert_eq!(pred.selected_index, 2);
        assert_eq!(pred.selected_text, "c");
        pred.validate(&set).unwrap();
    }

    #[test]
    fn single_candidate_short_circuits_without_backend_call() {
        let set = cands(&["open door"]);
        let backend = mock_script(BTreeMap::new());
        let pred =
            select(&sample(), &set, &cfg(SelectionMode::GenerativeLabel), &backend, &templates())
                .unwrap();
        assert_eq!(pred.selected_index, 0);
        assert_eq!(backend.calls(), 0);
    }

    #[test]
    fn likelihood_mode_takes_argmax_with_tie_break() {
        let set = cands(&["x", "y", "z"]);
        let backend = mock_script(BTreeMap::new()).with_choice_logprobs(BTreeMap::from([
            ("x".to_string(), -2.3),
            ("y".to_string(), -0.1),
            ("z".to_string(), -5.0),
        ]));
        let pred =
            select(&sample(), &set, &cfg(SelectionMode::Likelihood), &backend, &templates())
                .unwrap();
        assert_eq!(pred.selected_index, 1);
        assert_eq!(pred.scores, Some(vec![-2.3, -0.1, -5.0]));
        pred.validate(&set).unwrap();

        let tied = mock_script(BTreeMap::new()).with_letter_logprobs(BTreeMap::from([
            ('A', -1.0),
            ('B', -1.0),
            ('C', -1.0),
        ]));
        let pred =
            select(&sample(), &set, &cfg(SelectionMode::Likelihood), &tied, &templates()).unwrap();
        assert_eq!(pred.selected_index, 0);
    }

    #[test]
    fn score_candidates_reads_scripted_letter_logprobs() {
        let set = cands(&["first", "second"]);
        let backend = mock_script(BTreeMap::new())
            .with_letter_logprobs(BTreeMap::from([('A', -1.0), ('B', -3.0)]));
        let scores = score_candidates(
            &sample(),
            &set,
            &cfg(SelectionMode::Likelihood),
            &backend,
            &templates().main,
        )
        .unwrap();
        assert_eq!(scores, vec![-1.0, -3.0]);
    }

    #[test]
    fn permuting_candidates_permutes_scores() {
        let scripted = BTreeMap::from([
            ("make coffee".to_string(), -0.3),
            ("wash dishes".to_string(), -1.7),
            ("read a book".to_string(), -4.0),
        ]);
        let backend = mock_script(BTreeMap::new()).with_choice_logprobs(scripted);
        let forward = cands(&["make coffee", "wash dishes", "read a book"]);
        let reversed = cands(&["read a book", "wash dishes", "make coffee"]);
        let cfg = cfg(SelectionMode::Likelihood);
        let scores_fwd =
            score_candidates(&sample(), &forward, &cfg, &backend, &templates().main).unwrap();
        let scores_rev =
            score_candidates(&sample(), &reversed, &cfg, &backend, &templates().main).unwrap();
        let flipped: Vec<f64> = scores_rev.into_iter().rev().collect();
        assert_eq!(scores_fwd, flipped);
    }

    #[test]
    fn capability_missing_without_logprobs() {
        struct NoLogprobs;
        impl ChatBackend for NoLogprobs {
            fn id(&self) -> &str {
                "nolp"
            }
            fn complete(
                &self,
                _req: &BackendRequest,
            ) -> Result<crate::backend::BackendResponse, BackendError> {
                Ok(crate::backend::BackendResponse::text_only("A"))
            }
        }
        let err = score_candidates(
            &sample(),
            &cands(&["a", "b"]),
            &cfg(SelectionMode::Likelihood),
            &NoLogprobs,
            &templates().main,
        )
        .unwrap_err();
        assert!(matches!(err, SelectError::Backend(BackendError::CapabilityMissing(_))));
    }

    #[test]
    fn parse_selection_resolution_order() {
        let set = cands(&["Make coffee", "heat water for tea", "wash dishes", "find a cup", "rest"]);
        // rule 1: leading standalone letter
        assert_eq!(parse_selection("B. heat water for tea", &set).unwrap(), 1);
        assert_eq!(parse_selection(" (d) ", &set).unwrap(), 3);
        // rule 2: exact candidate text
        assert_eq!(parse_selection("Make coffee", &set).unwrap(), 0);
        // rule 3: normalized candidate text
        assert_eq!(parse_selection("MAKE   COFFEE.", &set).unwrap(), 0);
        // rule 4: unique normalized containment
        assert_eq!(parse_selection("The answer is: make coffee.", &set).unwrap(), 0);
        // out-of-range letter with no text match
        assert!(matches!(
            parse_selection("F", &set),
            Err(SelectError::NoMatch { .. })
        ));
        // ambiguous containment fails
        let overlapping = cands(&["coffee", "make coffee"]);
        assert!(parse_selection("I would say make coffee", &overlapping).is_err());
    }

    #[test]
    fn leading_word_is_not_a_letter_match() {
        let set = cands(&["boil water", "sleep"]);
        // "Boil" starts with a candidate-range letter but is a word
        assert_eq!(parse_selection("Boil water", &set).unwrap(), 0); // via rule 3
        assert!(parse_selection("Basically unsure", &set).is_err());
    }

    #[test]
    fn reprompt_recovers_then_fails_cleanly() {
        let set = cands(&["alpha", "beta"]);
        // main prompt answer unusable; retry template (single-letter
        // instruction) scripted to a letter — its key must out-length the
        // query key so longest-key-match picks it on the retry prompt
        let backend = mock_script(BTreeMap::from([
            ("what does she want?".to_string(), "hmm, not sure".to_string()),
            (
                "a single letter from the options above and nothing else".to_string(),
                "B".to_string(),
            ),
        ]));
        let pred =
            select(&sample(), &set, &cfg(SelectionMode::GenerativeLabel), &backend, &templates())
                .unwrap();
        assert_eq!(pred.selected_index, 1);
        assert_eq!(backend.calls(), 2);

        let hopeless = mock_script(BTreeMap::new()).with_default("no idea");
        let err = select(
            &sample(),
            &set,
            &cfg(SelectionMode::GenerativeLabel),
            &hopeless,
            &templates(),
        )
        .unwrap_err();
        match err {
            SelectError::ParseFailure { attempts, .. } => assert_eq!(attempts, 2),
            other => panic!("expected ParseFailure, got {other:?}"),
        }
    }

    #[test]
    fn options_block_labels_candidates() {
        let set = cands(&["one", "two", "three"]);
        assert_eq!(options_block(&set), "A. one\nB. two\nC. three");
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_constant_shift(
            scores in proptest::collection::vec(-50.0f64..50.0, 1..8),
            shift in -100.0f64..100.0,
        ) {
            let base = argmax_lowest_index(&scores);
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            prop_assert_eq!(base, argmax_lowest_index(&shifted));
        }

        #[test]
        fn selected_text_always_matches_index(
            texts in proptest::collection::vec("[a-z]{1,8}", 2..6),
            pick in 0usize..6,
        ) {
            let mut unique = texts.clone();
            unique.sort();
            unique.dedup();
            prop_assume!(unique.len() == texts.len());
            let set = CandidateSet {
                candidates: texts.clone(),
                origin: CandidateOrigin::Stage1Generated,
                raw_model_output: None,
            };
            let pick = pick % texts.len();
            let reply = format!("{}.", answer_letter(pick));
            let backend = mock_script(BTreeMap::new()).with_default(reply);
            let pred = select(
                &sample(),
                &set,
                &cfg(SelectionMode::GenerativeLabel),
                &backend,
                &templates(),
            ).unwrap();
            prop_assert_eq!(pred.selected_index, pick);
            prop_assert_eq!(&pred.selected_text, &set.candidates[pick]);
        }
    }
}
