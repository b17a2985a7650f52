//! OpenAI-compatible HTTP backend: `/chat/completions` for completions and
//! choice scoring, `/embeddings` for embeddings.
//!
//! The wire format is the de-facto standard chat-completions JSON, with video
//! passed as uniformly-sampled still frames encoded as base64 data URIs.
//! Transient failures (HTTP 429/5xx, timeouts) are retried with exponential
//! backoff; 401/403 surface immediately. Credentials come from an env var
//! named in the config and are never logged.

use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{
    validate_embed_input, BackendError, BackendRequest, BackendResponse, ChatBackend,
    EmbeddingBackend, EmbeddingVector, MessagePart, Role, ScoredChoice, TokenUsage,
};
use crate::types::RetryPolicy;

/// Finite stand-in logprob for an answer letter the server did not include
/// in its top-logprobs list.
pub const LOGPROB_FLOOR: f64 = -1.0e4;

/// How many alternatives per position to request when scoring choices.
const TOP_LOGPROBS: u8 = 20;

/// Connection details for one OpenAI-compatible endpoint.
#[derive(Clone, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Base URL including any `/v1` prefix, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key; unset or empty
    /// means no Authorization header (local servers).
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub supports_logprobs: bool,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl std::fmt::Debug for HttpBackendConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // key material stays out of Debug output
        f.debug_struct("HttpBackendConfig")
            .field("base_url", &self.base_url)
            .field("model_id", &self.model_id)
            .field("api_key_env", &self.api_key_env)
            .field("supports_logprobs", &self.supports_logprobs)
            .finish()
    }
}

pub struct OpenAiChatBackend {
    id: String,
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
}

impl OpenAiChatBackend {
    pub fn new(id: impl Into<String>, config: HttpBackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.retry.timeout_s))
            .build()
            .map_err(|e| BackendError::InvalidRequest(format!("http client: {e}")))?;
        Ok(OpenAiChatBackend {
            id: id.into(),
            config,
            client,
        })
    }

    fn api_key(&self) -> Result<Option<String>, BackendError> {
        match &self.config.api_key_env {
            None => Ok(None),
            Some(var) if var.is_empty() => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(key) if !key.is_empty() => Ok(Some(key)),
                _ => Err(BackendError::Auth(format!(
                    "environment variable {var} is not set"
                ))),
            },
        }
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn post_json(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value, BackendError> {
        let url = self.endpoint(path);
        let key = self.api_key()?;
        with_policy_retries(&self.config.retry, || {
            log::debug!("POST {url} model={}", self.config.model_id);
            let mut builder = self.client.post(&url).json(body);
            if let Some(key) = &key {
                builder = builder.bearer_auth(key);
            }
            let response = builder.send().map_err(|e| {
                // connection errors and timeouts are transient
                BackendError::Unavailable { attempts: 1, last: redact(&e.to_string(), key.as_deref()) }
            })?;
            let status = response.status();
            let text = response
                .text()
                .map_err(|e| BackendError::Unavailable { attempts: 1, last: e.to_string() })?;
            if status == reqwest::StatusCode::UNAUTHORIZED
                || status == reqwest::StatusCode::FORBIDDEN
            {
                return Err(BackendError::Auth(format!("HTTP {status}")));
            }
            if status.as_u16() == 429 || status.is_server_error() {
                return Err(BackendError::Unavailable {
                    attempts: 1,
                    last: format!("HTTP {status}"),
                });
            }
            if !status.is_success() {
                return Err(BackendError::MalformedResponse(format!(
                    "HTTP {status}: {}",
                    truncate(&text)
                )));
            }
            serde_json::from_str(&text)
                .map_err(|e| BackendError::MalformedResponse(format!("{e}: {}", truncate(&text))))
        })
    }

    fn chat_body(&self, req: &BackendRequest, logprobs: bool) -> Result<serde_json::Value, BackendError> {
        let mut messages = Vec::new();
        for message in &req.messages {
            let role = match message.role {
                Role::System => "system",
                Role::User => "user",
            };
            let only_text = message
                .parts
                .iter()
                .all(|p| matches!(p, MessagePart::Text(_)));
            let content = if only_text {
                serde_json::Value::String(message.text())
            } else {
                let mut parts = Vec::new();
                for part in &message.parts {
                    match part {
                        MessagePart::Text(t) => {
                            parts.push(serde_json::json!({"type": "text", "text": t}));
                        }
                        MessagePart::ImageRef(r) => {
                            parts.push(serde_json::json!({
                                "type": "image_url",
                                "image_url": {"url": image_url(r)?},
                            }));
                        }
                    }
                }
                serde_json::Value::Array(parts)
            };
            messages.push(serde_json::json!({"role": role, "content": content}));
        }
        let mut body = serde_json::json!({
            "model": self.config.model_id,
            "messages": messages,
            "temperature": req.decoding.temperature,
            "max_tokens": req.decoding.max_tokens,
        });
        if let Some(seed) = req.decoding.seed {
            body["seed"] = seed.into();
        }
        if logprobs {
            body["logprobs"] = true.into();
            body["top_logprobs"] = TOP_LOGPROBS.into();
        }
        Ok(body)
    }
}

/// Frame reference to wire form: URLs pass through, files become base64
/// data URIs. Files must be readable at send time.
fn image_url(reference: &str) -> Result<String, BackendError> {
    if reference.starts_with("http://") || reference.starts_with("https://") || reference.starts_with("data:") {
        return Ok(reference.to_string());
    }
    let bytes = std::fs::read(reference)
        .map_err(|e| BackendError::Media(format!("{reference}: {e}")))?;
    let mime = match reference.rsplit('.').next().map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("webp") => "image/webp",
        _ => "image/jpeg",
    };
    Ok(format!(
        "data:{mime};base64,{}",
        base64::engine::general_purpose::STANDARD.encode(bytes)
    ))
}

fn truncate(text: &str) -> String {
    const LIMIT: usize = 200;
    match text.char_indices().nth(LIMIT) {
        Some((i, _)) => format!("{}…", &text[..i]),
        None => text.to_string(),
    }
}

fn redact(message: &str, key: Option<&str>) -> String {
    match key {
        Some(key) if !key.is_empty() => message.replace(key, "***"),
        _ => message.to_string(),
    }
}

fn with_policy_retries<T>(
    policy: &RetryPolicy,
    mut op: impl FnMut() -> Result<T, BackendError>,
) -> Result<T, BackendError> {
    super::with_retries(policy, |_| op())
}

#[derive(Debug, Deserialize)]
struct ChatCompletion {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<WireLogprobs>,
}

#[derive(Debug, Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireLogprobs {
    #[serde(default)]
    content: Vec<WireTokenLogprob>,
}

#[derive(Debug, Deserialize)]
struct WireTokenLogprob {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<WireTopLogprob>,
}

#[derive(Debug, Deserialize)]
struct WireTopLogprob {
    token: String,
    logprob: f64,
}

#[derive(Debug, Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Debug, Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

impl ChatBackend for OpenAiChatBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        req.validate()?;
        let body = self.chat_body(req, req.want_logprobs && self.config.supports_logprobs)?;
        let started = Instant::now();
        let value = self.post_json("chat/completions", &body)?;
        let completion: ChatCompletion = serde_json::from_value(value)
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let choice = completion
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::MalformedResponse("no choices in response".into()))?;
        let text = choice
            .message
            .content
            .ok_or_else(|| BackendError::MalformedResponse("choice has no content".into()))?;
        if choice.finish_reason.as_deref() == Some("length") {
            log::warn!(
                "backend {} truncated the completion at max_tokens={}",
                self.id,
                req.decoding.max_tokens
            );
        }
        let token_logprobs = choice.logprobs.map(|lp| {
            lp.content
                .into_iter()
                .map(|t| (t.token, t.logprob))
                .collect::<Vec<_>>()
        });
        let usage = completion
            .usage
            .map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            })
            .unwrap_or_default();
        Ok(BackendResponse {
            text,
            token_logprobs: token_logprobs.filter(|_| req.want_logprobs),
            usage,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn supports_logprobs(&self) -> bool {
        self.config.supports_logprobs
    }

    /// Scores each choice via the logprob its answer letter receives among
    /// the first generated token's top alternatives. Letters the server
    /// omits get [`LOGPROB_FLOOR`].
    fn score_choices(
        &self,
        req: &BackendRequest,
        choices: &[ScoredChoice],
    ) -> Result<Vec<f64>, BackendError> {
        if !self.config.supports_logprobs {
            return Err(BackendError::CapabilityMissing(format!(
                "backend {} is not configured with logprob support",
                self.id
            )));
        }
        req.validate()?;
        let mut body = self.chat_body(req, true)?;
        body["max_tokens"] = 1.into();
        let value = self.post_json("chat/completions", &body)?;
        let completion: ChatCompletion = serde_json::from_value(value)
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let first = completion
            .choices
            .first()
            .and_then(|c| c.logprobs.as_ref())
            .and_then(|lp| lp.content.first())
            .ok_or_else(|| {
                BackendError::MalformedResponse("response carries no token logprobs".into())
            })?;
        let score_for = |letter: char| -> f64 {
            let matches = |token: &str| {
                let t = token.trim().trim_matches(|c| matches!(c, '.' | ')' | ':'));
                t.len() == 1 && t.chars().next().unwrap().eq_ignore_ascii_case(&letter)
            };
            let mut best = None::<f64>;
            if matches(&first.token) {
                best = Some(first.logprob);
            }
            for alt in &first.top_logprobs {
                if matches(&alt.token) && best.is_none_or(|b| alt.logprob > b) {
                    best = Some(alt.logprob);
                }
            }
            best.unwrap_or(LOGPROB_FLOOR)
        };
        Ok(choices.iter().map(|c| score_for(c.letter)).collect())
    }
}

pub struct OpenAiEmbeddingBackend {
    id: String,
    chat: OpenAiChatBackend,
}

impl OpenAiEmbeddingBackend {
    pub fn new(id: impl Into<String>, config: HttpBackendConfig) -> Result<Self, BackendError> {
        let id = id.into();
        Ok(OpenAiEmbeddingBackend {
            chat: OpenAiChatBackend::new(id.clone(), config)?,
            id,
        })
    }
}

impl EmbeddingBackend for OpenAiEmbeddingBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        validate_embed_input(texts)?;
        let body = serde_json::json!({
            "model": self.chat.config.model_id,
            "input": texts,
        });
        let value = self.chat.post_json("embeddings", &body)?;
        let parsed: EmbeddingsResponse = serde_json::from_value(value)
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(BackendError::MalformedResponse(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        let mut data = parsed.data;
        data.sort_by_key(|d| d.index);
        let vectors: Vec<EmbeddingVector> = data
            .into_iter()
            .map(|d| EmbeddingVector::new(d.embedding, &self.chat.config.model_id))
            .collect();
        for v in &vectors {
            v.validate()?;
        }
        Ok(vectors)
    }
}
