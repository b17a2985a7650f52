//! Stage 1: render the proposal prompt, call the backend, and parse a set of
//! distinct candidate goals.
//!
//! The emission order of the parsed list is the ranking: models list the most
//! salient hypothesis first, and the list is capped at the configured top-K.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::backend::{BackendError, BackendRequest, ChatBackend, ChatMessage, MessagePart};
use crate::dataset::{sample_frames, DatasetError};
use crate::template::{load_retry_template, load_template, PromptTemplate, TemplateError};
use crate::types::{
    normalize_text, CandidateOrigin, CandidateSet, MediaRef, ObservationSample, RunConfig, RunMode,
};

/// Extra backend calls allowed when the first reply has too few distinct
/// candidates.
pub const MAX_REPROMPTS: u32 = 2;

/// Fewest distinct candidates worth selecting over.
pub const MIN_CANDIDATES: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum ProposeError {
    #[error("proposal parsing failed after {attempts} attempts (last output: {last_output:?})")]
    ParseFailure { attempts: u32, last_output: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Media(#[from] DatasetError),
    #[error("propose() requires open_two_step mode, got {0}")]
    WrongMode(&'static str),
}

/// Main and re-prompt templates for the proposal stage.
#[derive(Debug, Clone)]
pub struct ProposerTemplates {
    pub main: PromptTemplate,
    pub retry: PromptTemplate,
}

impl ProposerTemplates {
    pub fn load(cfg: &RunConfig) -> Result<Self, TemplateError> {
        let dir = cfg.templates.dir.as_deref();
        let main = load_template(dir, &cfg.templates.propose)?;
        main.require(&["query", "k"])?;
        let retry = load_retry_template(dir, &cfg.templates.propose, "propose_retry")?;
        retry.require(&["query", "k"])?;
        Ok(ProposerTemplates { main, retry })
    }
}

/// Builds the chat messages for one stage: optional system text, then a user
/// message carrying the sampled frames (temporal order) followed by the
/// rendered prompt text.
pub(crate) fn stage_messages(
    system_text: &str,
    user_text: String,
    media: &MediaRef,
    frames_per_video: usize,
) -> Result<Vec<ChatMessage>, DatasetError> {
    let mut parts = Vec::new();
    if media.frame_manifest.is_some() {
        for frame in sample_frames(media, frames_per_video)? {
            parts.push(MessagePart::ImageRef(frame));
        }
    }
    parts.push(MessagePart::Text(user_text));
    let mut messages = Vec::new();
    if !system_text.is_empty() {
        messages.push(ChatMessage::system(system_text));
    }
    messages.push(ChatMessage::user(parts));
    Ok(messages)
}

/// Extracts list items from a model reply. Accepts lettered (`A.`/`A)`),
/// numbered (`1.`/`1)`) and dash/bullet lines; other lines are ignored.
/// Markers are stripped, empty items dropped, and the result truncated to
/// `k_max` in emission order. Never fails: unusable text yields an empty
/// list and the caller decides whether to re-prompt.
pub fn parse_candidates(raw: &str, k_max: usize) -> Vec<String> {
    let mut items = Vec::new();
    for line in raw.lines() {
        if items.len() == k_max {
            break;
        }
        if let Some(item) = strip_list_marker(line) {
            let item = item.trim();
            if !item.is_empty() {
                items.push(item.to_string());
            }
        }
    }
    items
}

/// The item text of a list line, or `None` when the line carries no marker.
fn strip_list_marker(line: &str) -> Option<&str> {
    let s = line.trim_start();
    for bullet in ['-', '*', '•'] {
        if let Some(rest) = s.strip_prefix(bullet) {
            return Some(rest.trim_start());
        }
    }
    let (parenthesized, body) = match s.strip_prefix('(') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let mut chars = body.chars();
    if let Some(first) = chars.next() {
        if first.is_ascii_alphabetic() {
            if let Some(rest) = strip_marker_separator(&body[first.len_utf8()..], parenthesized) {
                return Some(rest);
            }
        }
    }
    let digits = body.chars().take_while(char::is_ascii_digit).count();
    if (1..=3).contains(&digits) {
        if let Some(rest) = strip_marker_separator(&body[digits..], parenthesized) {
            return Some(rest);
        }
    }
    None
}

fn strip_marker_separator(rest: &str, parenthesized: bool) -> Option<&str> {
    if parenthesized {
        return rest.strip_prefix(')').map(str::trim_start);
    }
    for sep in ['.', ')', ':'] {
        if let Some(r) = rest.strip_prefix(sep) {
            return Some(r.trim_start());
        }
    }
    None
}

/// Drops items equal to an earlier one under normalization, keeping first
/// occurrences in order. Items that normalize to nothing are dropped too.
fn dedup_normalized(items: Vec<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    items
        .into_iter()
        .filter(|item| {
            let key = normalize_text(item);
            !key.is_empty() && seen.insert(key)
        })
        .collect()
}

/// Stage 1: proposes up to `cfg.k_candidates` distinct goal candidates for
/// the sample. Re-prompts at most [`MAX_REPROMPTS`] times when the reply
/// parses to fewer than [`MIN_CANDIDATES`] distinct items.
pub fn propose(
    sample: &ObservationSample,
    cfg: &RunConfig,
    backend: &dyn ChatBackend,
    templates: &ProposerTemplates,
) -> Result<CandidateSet, ProposeError> {
    if cfg.mode != RunMode::OpenTwoStep {
        return Err(ProposeError::WrongMode(cfg.mode.as_str()));
    }
    let bindings = BTreeMap::from([
        ("query", sample.query.clone()),
        ("k", cfg.k_candidates.to_string()),
    ]);

    let mut last_output = String::new();
    for attempt in 0..=MAX_REPROMPTS {
        let template = if attempt == 0 { &templates.main } else { &templates.retry };
        let user_text = template.render_user(&bindings)?;
        let messages =
            stage_messages(&template.system_text, user_text, &sample.media, cfg.frames_per_video)?;
        let request = BackendRequest::new(backend.model_id(), messages)
            .with_decoding(cfg.decoding.clone());
        let response = backend.complete(&request)?;
        let candidates = dedup_normalized(parse_candidates(&response.text, cfg.k_candidates));
        last_output = response.text;
        if candidates.len() >= MIN_CANDIDATES {
            return Ok(CandidateSet {
                candidates,
                origin: CandidateOrigin::Stage1Generated,
                raw_model_output: Some(last_output),
            });
        }
    }
    Err(ProposeError::ParseFailure {
        attempts: MAX_REPROMPTS + 1,
        last_output,
    })
}
