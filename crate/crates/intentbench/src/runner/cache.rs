//! Content-addressed cache for backend exchanges.
//!
//! Every chat completion, choice scoring and embedding call is keyed by a
//! hash of its full logical content (backend id, model, rendered messages,
//! media digests, decoding parameters) and stored as one JSON file under a
//! two-level hex fan-out. Writes go to a temp file and are renamed into
//! place, so concurrent writers are safe and interrupted runs only resume
//! work that never finished.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{
    BackendError, BackendRequest, BackendResponse, ChatBackend, EmbeddingBackend, EmbeddingVector,
    MessagePart, ScoredChoice,
};

/// What one cached exchange holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachedPayload {
    Chat(BackendResponse),
    Scores(Vec<f64>),
    Embeddings(Vec<EmbeddingVector>),
}

/// One immutable cache entry: content-hash key, payload, payload checksum
/// and creation time (unix seconds).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub payload: CachedPayload,
    pub checksum: String,
    pub created_at: u64,
}

impl CacheEntry {
    fn new(key: String, payload: CachedPayload) -> Self {
        let checksum = payload_checksum(&payload);
        let created_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        CacheEntry { key, payload, checksum, created_at }
    }

    fn verified(self) -> Option<CachedPayload> {
        (payload_checksum(&self.payload) == self.checksum).then_some(self.payload)
    }
}

fn payload_checksum(payload: &CachedPayload) -> String {
    let bytes = serde_json::to_vec(payload).expect("payload serializes");
    hex::encode(Sha256::digest(bytes))
}

/// On-disk response cache with hit/miss accounting.
pub struct ResponseCache {
    dir: PathBuf,
    refresh: bool,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl ResponseCache {
    /// Opens (and creates) the cache directory. With `refresh` set, reads are
    /// skipped and every exchange is re-fetched and re-stored.
    pub fn open(dir: impl Into<PathBuf>, refresh: bool) -> std::io::Result<ResponseCache> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(ResponseCache {
            dir,
            refresh,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::SeqCst)
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[0..2]).join(&key[2..4]).join(format!("{key}.json"))
    }

    fn read(&self, key: &str) -> Option<CachedPayload> {
        if self.refresh {
            return None;
        }
        let path = self.entry_path(key);
        let text = std::fs::read_to_string(&path).ok()?;
        let entry: CacheEntry = match serde_json::from_str(&text) {
            Ok(e) => e,
            Err(e) => {
                log::warn!("corrupt cache entry {} ({e}), treating as miss", path.display());
                return None;
            }
        };
        if entry.key != key {
            log::warn!("cache entry {} carries unexpected key, treating as miss", path.display());
            return None;
        }
        match entry.verified() {
            Some(payload) => Some(payload),
            None => {
                log::warn!("cache entry {} failed checksum, treating as miss", path.display());
                None
            }
        }
    }

    fn write(&self, key: &str, payload: CachedPayload) -> CachedPayload {
        let entry = CacheEntry::new(key.to_string(), payload);
        let path = self.entry_path(key);
        if let Some(parent) = path.parent() {
            if let Err(e) = std::fs::create_dir_all(parent) {
                log::warn!("cannot create cache dir {}: {e}", parent.display());
                return entry.payload;
            }
        }
        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        let serialized = serde_json::to_vec_pretty(&entry).expect("entry serializes");
        if let Err(e) = std::fs::write(&tmp, serialized).and_then(|()| std::fs::rename(&tmp, &path)) {
            log::warn!("cache write failed for {}: {e}", path.display());
            let _ = std::fs::remove_file(&tmp);
        }
        entry.payload
    }

    /// Cached chat completion: hit returns the stored response without
    /// touching the backend, miss calls through and persists before
    /// returning.
    pub fn get_or_call(
        &self,
        backend: &dyn ChatBackend,
        req: &BackendRequest,
    ) -> Result<BackendResponse, BackendError> {
        let key = chat_key(backend, req);
        if let Some(CachedPayload::Chat(response)) = self.read(&key) {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(response);
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let response = backend.complete(req)?;
        match self.write(&key, CachedPayload::Chat(response)) {
            CachedPayload::Chat(response) => Ok(response),
            _ => unreachable!("chat payload in, chat payload out"),
        }
    }

    /// Cached choice scoring.
    pub fn get_or_score(
        &self,
        backend: &dyn ChatBackend,
        req: &BackendRequest,
        choices: &[ScoredChoice],
    ) -> Result<Vec<f64>, BackendError> {
        let key = score_key(backend, req, choices);
        if let Some(CachedPayload::Scores(scores)) = self.read(&key) {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(scores);
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let scores = backend.score_choices(req, choices)?;
        match self.write(&key, CachedPayload::Scores(scores)) {
            CachedPayload::Scores(scores) => Ok(scores),
            _ => unreachable!(),
        }
    }

    /// Cached embedding lookup.
    pub fn get_or_embed(
        &self,
        backend: &dyn EmbeddingBackend,
        texts: &[String],
    ) -> Result<Vec<EmbeddingVector>, BackendError> {
        let key = embed_key(backend, texts);
        if let Some(CachedPayload::Embeddings(vectors)) = self.read(&key) {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(vectors);
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let vectors = backend.embed(texts)?;
        match self.write(&key, CachedPayload::Embeddings(vectors)) {
            CachedPayload::Embeddings(vectors) => Ok(vectors),
            _ => unreachable!(),
        }
    }
}

/// Digest of an image reference: file content when readable, the path text
/// otherwise. Keeps keys stable across machines sharing the same frames.
fn media_digest(reference: &str) -> String {
    match std::fs::read(reference) {
        Ok(bytes) => hex::encode(Sha256::digest(bytes)),
        Err(_) => hex::encode(Sha256::digest(reference.as_bytes())),
    }
}

fn hash_key(material: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(material).expect("key material serializes");
    hex::encode(Sha256::digest(bytes))
}

fn request_material(backend: &dyn ChatBackend, req: &BackendRequest) -> serde_json::Value {
    let messages: Vec<serde_json::Value> = req
        .messages
        .iter()
        .map(|m| {
            let parts: Vec<serde_json::Value> = m
                .parts
                .iter()
                .map(|p| match p {
                    MessagePart::Text(t) => serde_json::json!({"text": t}),
                    MessagePart::ImageRef(r) => serde_json::json!({"image": media_digest(r)}),
                })
                .collect();
            serde_json::json!({"role": m.role, "parts": parts})
        })
        .collect();
    serde_json::json!({
        "backend": backend.id(),
        "model": req.model_id,
        "messages": messages,
        "decoding": req.decoding,
        "want_logprobs": req.want_logprobs,
    })
}

pub fn chat_key(backend: &dyn ChatBackend, req: &BackendRequest) -> String {
    let mut material = request_material(backend, req);
    material["kind"] = "chat".into();
    hash_key(&material)
}

pub fn score_key(backend: &dyn ChatBackend, req: &BackendRequest, choices: &[ScoredChoice]) -> String {
    let mut material = request_material(backend, req);
    material["kind"] = "score".into();
    material["choices"] = serde_json::to_value(choices).expect("choices serialize");
    hash_key(&material)
}

pub fn embed_key(backend: &dyn EmbeddingBackend, texts: &[String]) -> String {
    hash_key(&serde_json::json!({
        "kind": "embed",
        "backend": backend.id(),
        "texts": texts,
    }))
}

/// Decorator routing every call of a [`ChatBackend`] through the cache.
pub struct CachingChatBackend<'a> {
    pub inner: &'a dyn ChatBackend,
    pub cache: &'a ResponseCache,
}

impl ChatBackend for CachingChatBackend<'_> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        self.cache.get_or_call(self.inner, req)
    }

    fn supports_logprobs(&self) -> bool {
        self.inner.supports_logprobs()
    }

    fn score_choices(
        &self,
        req: &BackendRequest,
        choices: &[ScoredChoice],
    ) -> Result<Vec<f64>, BackendError> {
        self.cache.get_or_score(self.inner, req, choices)
    }
}

/// Decorator routing every call of an [`EmbeddingBackend`] through the cache.
pub struct CachingEmbeddingBackend<'a> {
    pub inner: &'a dyn EmbeddingBackend,
    pub cache: &'a ResponseCache,
}

impl EmbeddingBackend for CachingEmbeddingBackend<'_> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        self.cache.get_or_embed(self.inner, texts)
    }
}
