//! Uniform interface to vision-language chat backends and embedding
//! providers.
//!
//! Two implementations ship with the crate: a deterministic scripted mock
//! ([`mock`]) for tests and offline runs, and an OpenAI-compatible HTTP
//! client ([`http`]) that talks to hosted or local inference servers.

pub mod http;
pub mod mock;

use serde::{Deserialize, Serialize};

use crate::types::{normalize_text, DecodingParams, RetryPolicy};

/// Message author role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
}

/// One piece of a chat message: text or a reference to an image file/URL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessagePart {
    Text(String),
    /// Path or URL of a still frame; resolved to wire format at send time.
    ImageRef(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<MessagePart>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            parts: vec![MessagePart::Text(text.into())],
        }
    }

    pub fn user(parts: Vec<MessagePart>) -> Self {
        ChatMessage {
            role: Role::User,
            parts,
        }
    }

    /// Concatenated text content, ignoring image parts.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for part in &self.parts {
            if let MessagePart::Text(t) = part {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(t);
            }
        }
        out
    }
}

/// Normalized multimodal chat request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub decoding: DecodingParams,
    pub want_logprobs: bool,
}

impl BackendRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        BackendRequest {
            model_id: model_id.into(),
            messages,
            decoding: DecodingParams::default(),
            want_logprobs: false,
        }
    }

    pub fn with_decoding(mut self, decoding: DecodingParams) -> Self {
        self.decoding = decoding;
        self
    }

    /// Full rendered prompt text (all messages, image parts skipped). This is
    /// what scripted mocks match fixture keys against.
    pub fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .map(ChatMessage::text)
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn image_refs(&self) -> Vec<&str> {
        self.messages
            .iter()
            .flat_map(|m| m.parts.iter())
            .filter_map(|p| match p {
                MessagePart::ImageRef(r) => Some(r.as_str()),
                MessagePart::Text(_) => None,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(BackendError::InvalidRequest(
                "request must contain at least one user message".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Completion returned by a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
    /// Per-token logprobs of the completion, when requested and supported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<(String, f64)>>,
    pub usage: TokenUsage,
    pub latency_ms: u64,
}

impl BackendResponse {
    pub fn text_only(text: impl Into<String>) -> Self {
        BackendResponse {
            text: text.into(),
            token_logprobs: None,
            usage: TokenUsage::default(),
            latency_ms: 0,
        }
    }
}

/// Sentence or token embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model_id: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, model_id: impl Into<String>) -> Self {
        EmbeddingVector {
            values,
            model_id: model_id.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.values.is_empty() {
            return Err(BackendError::InvalidRequest("embedding has zero length".into()));
        }
        if !self.values.iter().all(|v| v.is_finite()) {
            return Err(BackendError::MalformedResponse(
                "embedding contains non-finite values".into(),
            ));
        }
        Ok(())
    }
}

/// A labelled answer choice whose plausibility the backend scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChoice {
    /// Answer letter the choice carries in the multiple-choice prompt.
    pub letter: char,
    pub text: String,
}

/// Backend failure taxonomy shared by all implementations.
#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("no fixture matches the prompt: {0}")]
    FixtureMiss(String),
    #[error("backend lacks capability: {0}")]
    CapabilityMissing(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("media not readable: {0}")]
    Media(String),
}

impl BackendError {
    /// Transient errors are retried; everything else surfaces immediately.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Unavailable { .. })
    }
}

/// Chat-completion backend over text+images.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;

    /// Model identifier stamped into requests; defaults to the backend id.
    fn model_id(&self) -> &str {
        self.id()
    }

    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError>;

    /// Whether the backend can score answer choices via token logprobs.
    fn supports_logprobs(&self) -> bool {
        false
    }

    /// Plausibility score (log-probability) of each choice's answer-letter
    /// continuation under the prompt. One score per choice, all finite.
    fn score_choices(
        &self,
        _req: &BackendRequest,
        _choices: &[ScoredChoice],
    ) -> Result<Vec<f64>, BackendError> {
        Err(BackendError::CapabilityMissing(format!(
            "backend {:?} does not expose logprobs",
            self.id()
        )))
    }
}

/// Text embedding provider.
pub trait EmbeddingBackend: Send + Sync {
    fn id(&self) -> &str;

    /// One vector per input text, all of the same dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError>;
}

pub(crate) fn validate_embed_input(texts: &[String]) -> Result<(), BackendError> {
    if texts.is_empty() {
        return Err(BackendError::InvalidRequest("embed() requires at least one text".into()));
    }
    if let Some(t) = texts.iter().find(|t| normalize_text(t).is_empty()) {
        return Err(BackendError::InvalidRequest(format!(
            "embed() input empty after normalization: {t:?}"
        )));
    }
    Ok(())
}

/// Runs `op` under the retry policy: transient failures back off
/// exponentially and retry up to `policy.max_retries` extra attempts,
/// non-retryable errors surface after the first attempt.
pub fn with_retries<T>(
    policy: &RetryPolicy,
    mut op: impl FnMut(u32) -> Result<T, BackendError>,
) -> Result<T, BackendError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match op(attempt) {
            Ok(v) => return Ok(v),
            Err(e) if e.is_retryable() && attempt <= policy.max_retries => {
                let delay = policy.delay_ms(attempt);
                log::debug!("transient backend failure (attempt {attempt}), retrying in {delay} ms: {e}");
                if delay > 0 {
                    std::thread::sleep(std::time::Duration::from_millis(delay));
                }
            }
            Err(BackendError::Unavailable { last, .. }) => {
                return Err(BackendError::Unavailable { attempts: attempt, last })
            }
            Err(e) => return Err(e),
        }
    }
}
