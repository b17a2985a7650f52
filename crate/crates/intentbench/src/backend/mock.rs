//! Deterministic scripted backends for tests and offline runs.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    validate_embed_input, BackendError, BackendRequest, BackendResponse, ChatBackend,
    EmbeddingBackend, EmbeddingVector, ScoredChoice,
};
use crate::types::normalize_text;

/// Scripted chat backend. `complete()` answers by longest-key-match: of all
/// fixture keys occurring verbatim in the rendered prompt, the longest wins.
///
/// Identical requests always yield identical responses.
#[derive(Debug, Serialize, Deserialize)]
pub struct MockChatBackend {
    #[serde(default)]
    pub id: String,
    /// prompt-substring key -> scripted completion text.
    #[serde(default)]
    pub fixtures: BTreeMap<String, String>,
    /// Fallback completion when no key matches (ignored in strict mode).
    #[serde(default)]
    pub default_response: Option<String>,
    /// When set, unmatched prompts fail with `FixtureMiss`.
    #[serde(default)]
    pub strict: bool,
    /// Choice scores keyed by normalized candidate text.
    #[serde(default)]
    pub choice_logprobs: BTreeMap<String, f64>,
    /// Choice scores keyed by answer letter; lower priority than text keys.
    #[serde(default)]
    pub letter_logprobs: BTreeMap<char, f64>,
    /// Score for choices matched by neither map.
    #[serde(default = "default_logprob")]
    pub default_logprob: f64,
    #[serde(skip)]
    calls: AtomicU64,
}

fn default_logprob() -> f64 {
    -10.0
}

impl Default for MockChatBackend {
    fn default() -> Self {
        MockChatBackend {
            id: "mock".into(),
            fixtures: BTreeMap::new(),
            default_response: None,
            strict: false,
            choice_logprobs: BTreeMap::new(),
            letter_logprobs: BTreeMap::new(),
            default_logprob: default_logprob(),
            calls: AtomicU64::new(0),
        }
    }
}

/// Scripted backend answering by longest-key-match against the prompt.
pub fn mock_script(fixtures: BTreeMap<String, String>) -> MockChatBackend {
    MockChatBackend {
        id: "mock".into(),
        fixtures,
        default_response: None,
        strict: true,
        choice_logprobs: BTreeMap::new(),
        letter_logprobs: BTreeMap::new(),
        default_logprob: default_logprob(),
        calls: AtomicU64::new(0),
    }
}

impl MockChatBackend {
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_default(mut self, text: impl Into<String>) -> Self {
        self.default_response = Some(text.into());
        self.strict = false;
        self
    }

    pub fn with_choice_logprobs(mut self, scores: BTreeMap<String, f64>) -> Self {
        self.choice_logprobs = scores
            .into_iter()
            .map(|(k, v)| (normalize_text(&k), v))
            .collect();
        self
    }

    pub fn with_letter_logprobs(mut self, scores: BTreeMap<char, f64>) -> Self {
        self.letter_logprobs = scores;
        self
    }

    /// Number of `complete`/`score_choices` invocations so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn lookup(&self, prompt: &str) -> Option<&str> {
        self.fixtures
            .iter()
            .filter(|(key, _)| prompt.contains(key.as_str()))
            .max_by_key(|(key, _)| key.len())
            .map(|(_, v)| v.as_str())
    }
}

impl ChatBackend for MockChatBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        req.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = req.prompt_text();
        match self.lookup(&prompt) {
            Some(text) => Ok(BackendResponse::text_only(text)),
            None => match (&self.default_response, self.strict) {
                (Some(text), false) => Ok(BackendResponse::text_only(text.clone())),
                _ => Err(BackendError::FixtureMiss(truncate_for_error(&prompt))),
            },
        }
    }

    fn supports_logprobs(&self) -> bool {
        true
    }

    fn score_choices(
        &self,
        req: &BackendRequest,
        choices: &[ScoredChoice],
    ) -> Result<Vec<f64>, BackendError> {
        req.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(choices
            .iter()
            .map(|c| {
                self.choice_logprobs
                    .get(&normalize_text(&c.text))
                    .or_else(|| self.letter_logprobs.get(&c.letter))
                    .copied()
                    .unwrap_or(self.default_logprob)
            })
            .collect())
    }
}

fn truncate_for_error(prompt: &str) -> String {
    const LIMIT: usize = 160;
    if prompt.chars().count() <= LIMIT {
        prompt.to_string()
    } else {
        let head: String = prompt.chars().take(LIMIT).collect();
        format!("{head}…")
    }
}

/// Deterministic embedder: each vector is a seeded hash expansion of the
/// normalized input text. Equal texts map to equal vectors on every platform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockEmbedder {
    #[serde(default)]
    pub id: String,
    pub dim: usize,
    pub seed: u64,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        MockEmbedder {
            id: "mock-embed".into(),
            dim: 32,
            seed: 7,
        }
    }
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        MockEmbedder {
            id: "mock-embed".into(),
            dim,
            seed,
        }
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let norm = normalize_text(text);
        let mut values = Vec::with_capacity(self.dim);
        let mut counter: u64 = 0;
        'outer: loop {
            let mut hasher = Sha256::new();
            hasher.update(self.seed.to_le_bytes());
            hasher.update(counter.to_le_bytes());
            hasher.update(norm.as_bytes());
            let digest = hasher.finalize();
            for chunk in digest.chunks_exact(8) {
                let raw = u64::from_le_bytes(chunk.try_into().unwrap());
                // map to [-1, 1)
                values.push((raw as f64 / (u64::MAX as f64 / 2.0)) - 1.0);
                if values.len() == self.dim {
                    break 'outer;
                }
            }
            counter += 1;
        }
        values
    }
}

impl EmbeddingBackend for MockEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        validate_embed_input(texts)?;
        Ok(texts
            .iter()
            .map(|t| EmbeddingVector::new(self.embed_one(t), &self.id))
            .collect())
    }
}
