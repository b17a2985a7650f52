//! Two-stage intention inference over video QA benchmarks.
//!
//! Given a video (as pre-extracted frames) and a question about what the
//! observed person is trying to achieve, the pipeline first **proposes** a
//! small set of candidate goals with one vision-language backend, then
//! **selects** the most plausible candidate with a second one. A metrics
//! suite (accuracy, ROUGE-1, ROUGE-L, embedding cosine similarity,
//! BERTScore-F1) and a caching, resumable runner turn that pipeline into a
//! reproducible benchmark harness.
//!
//! ## Modules
//!
//! - [`types`] — shared value objects: samples, candidate sets, predictions,
//!   run configuration, and the canonical [`types::normalize_text`] form.
//! - [`backend`] — the [`backend::ChatBackend`] / [`backend::EmbeddingBackend`]
//!   traits, a deterministic scripted mock, and an OpenAI-compatible HTTP
//!   client with retries and backoff.
//! - [`template`] — versioned prompt templates with `{query}`, `{k}` and
//!   `{options}` placeholders.
//! - [`proposer`] — stage 1: prompt rendering and candidate-list parsing.
//! - [`selector`] — stage 2: answer-letter parsing and likelihood scoring
//!   with lowest-index tie-breaks.
//! - [`dataset`] — JSONL ingestion and frame-manifest management.
//! - [`metrics`] — the text metrics, all pure functions.
//! - [`runner`] — end-to-end orchestration, content-addressed response
//!   caching, and report rendering.
//! - [`config`] — the TOML harness configuration.
//!
//! ## Examples
//!
//! Each major capability has a runnable example (all offline, mock-backed):
//!
//! ```text
//! cargo run -p intentbench --example normalize_and_tokenize
//! cargo run -p intentbench --example mock_backend_basics
//! cargo run -p intentbench --example propose_candidates
//! cargo run -p intentbench --example select_intention
//! cargo run -p intentbench --example likelihood_scoring
//! cargo run -p intentbench --example dataset_loading
//! cargo run -p intentbench --example frame_sampling
//! cargo run -p intentbench --example text_metrics
//! cargo run -p intentbench --example response_cache
//! cargo run -p intentbench --example closed_choice_run
//! cargo run -p intentbench --example open_two_step_run
//! cargo run -p intentbench --example report_rendering
//! cargo run -p intentbench --example http_backend
//! ```
//!
//! The `intentbench` binary wraps the same library surface as three
//! subcommands: `validate`, `run` and `report`.
//!
//! ## Quick start
//!
//! ```
//! use std::collections::BTreeMap;
//! use intentbench::backend::mock::mock_script;
//! use intentbench::proposer::{propose, ProposerTemplates};
//! use intentbench::types::*;
//!
//! let sample = ObservationSample {
//!     id: "demo".into(),
//!     media: MediaRef::video("vid_000"),
//!     query: "what is the person trying to do?".into(),
//!     options: None,
//!     ground_truth: None,
//!     category: Category::CW,
//! };
//! let cfg = RunConfig::new(RunMode::OpenTwoStep);
//! let backend = mock_script(BTreeMap::from([(
//!     "trying to do".to_string(),
//!     "A. make coffee\nB. heat water for tea".to_string(),
//! )]));
//! let templates = ProposerTemplates::load(&cfg).unwrap();
//! let candidates = propose(&sample, &cfg, &backend, &templates).unwrap();
//! assert_eq!(candidates.candidates.len(), 2);
//! ```

pub mod backend;
pub mod config;
pub mod dataset;
pub mod metrics;
pub mod proposer;
pub mod runner;
pub mod selector;
pub mod template;
pub mod types;

pub use backend::{BackendRequest, BackendResponse, ChatBackend, EmbeddingBackend};
pub use types::{
    CandidateSet, Category, GroundTruth, IntentionPrediction, MediaRef, ObservationSample,
    RunConfig, RunMode,
};
