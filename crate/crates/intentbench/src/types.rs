//! Shared domain types for the inference pipeline and the evaluation harness.
//!
//! Everything here is an immutable value object with no I/O: samples, media
//! references, candidate sets, predictions and run configuration. All of it is
//! serde-serializable so runs can be cached, replayed and diffed.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

/// Kind of media a sample refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Video,
    Image,
}

/// Reference to the visual evidence of a sample.
///
/// Frames are pre-extracted still images; this type never touches the
/// filesystem itself. `frame_manifest` holds frame identifiers in strict
/// timestamp order when frames are known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaRef {
    pub kind: MediaKind,
    /// URI or filesystem path of the underlying video/image.
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_manifest: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

impl MediaRef {
    pub fn video(source: impl Into<String>) -> Self {
        MediaRef {
            kind: MediaKind::Video,
            source: source.into(),
            frame_manifest: None,
            duration_s: None,
        }
    }

    pub fn image(source: impl Into<String>) -> Self {
        MediaRef {
            kind: MediaKind::Image,
            source: source.into(),
            frame_manifest: None,
            duration_s: None,
        }
    }

    pub fn with_frames(mut self, frames: Vec<String>) -> Self {
        self.frame_manifest = Some(frames);
        self
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if let Some(frames) = &self.frame_manifest {
            if frames.is_empty() {
                return Err(CoreError::EmptyFrameManifest);
            }
            if !frames.windows(2).all(|w| w[0] < w[1]) {
                return Err(CoreError::UnorderedFrameManifest);
            }
            if self.kind == MediaKind::Image && frames.len() != 1 {
                return Err(CoreError::ImageFrameCount(frames.len()));
            }
        }
        if let Some(d) = self.duration_s {
            if d.is_nan() || d < 0.0 {
                return Err(CoreError::NegativeDuration(d));
            }
        }
        Ok(())
    }
}

/// Question category. `CW`/`CH`/`TN`/`TP` are the causal/temporal categories
/// of intention QA records; `Other` covers instance-level records that carry
/// no category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
pub enum Category {
    CW,
    CH,
    TN,
    TP,
    #[serde(rename = "OTHER")]
    Other,
}

impl Category {
    pub fn parse(s: &str) -> Option<Category> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CW" => Some(Category::CW),
            "CH" => Some(Category::CH),
            "TN" => Some(Category::TN),
            "TP" => Some(Category::TP),
            "OTHER" | "" => Some(Category::Other),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::CW => "CW",
            Category::CH => "CH",
            Category::TN => "TN",
            Category::TP => "TP",
            Category::Other => "OTHER",
        }
    }
}

/// Ground truth of a sample: an index into the options list for
/// multiple-choice records, free-form reference text for open-ended ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroundTruth {
    Index(usize),
    Text(String),
}

/// One benchmark record: media, query, optional answer options, ground truth
/// and category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSample {
    pub id: String,
    pub media: MediaRef,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
    pub category: Category,
}

/// Largest options list a sample may carry (one per answer letter).
pub const MAX_OPTIONS: usize = 26;

impl ObservationSample {
    pub fn validate(&self) -> Result<(), CoreError> {
        self.media.validate()?;
        if self.query.trim().is_empty() {
            return Err(CoreError::EmptyQuery);
        }
        if let Some(options) = &self.options {
            if options.is_empty() || options.len() > MAX_OPTIONS {
                return Err(CoreError::BadOptionCount(options.len()));
            }
            if options.iter().any(|o| normalize_text(o).is_empty()) {
                return Err(CoreError::EmptyOption);
            }
        }
        if let Some(GroundTruth::Index(idx)) = &self.ground_truth {
            match &self.options {
                Some(options) if *idx < options.len() => {}
                Some(options) => {
                    return Err(CoreError::AnswerIndexOutOfRange {
                        index: *idx,
                        options: options.len(),
                    })
                }
                None => return Err(CoreError::AnswerIndexWithoutOptions(*idx)),
            }
        }
        Ok(())
    }

    /// The reference text open-vocabulary metrics compare against: the
    /// ground-truth option text for multiple-choice records, the free-form
    /// answer otherwise.
    pub fn reference_text(&self) -> Option<&str> {
        match &self.ground_truth {
            Some(GroundTruth::Index(idx)) => {
                self.options.as_ref().and_then(|o| o.get(*idx)).map(String::as_str)
            }
            Some(GroundTruth::Text(t)) => Some(t.as_str()),
            None => None,
        }
    }
}

/// Where a candidate set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateOrigin {
    DatasetOptions,
    Stage1Generated,
}

/// Ordered list of proposed goal texts. Order is the ranking: the first
/// candidate is the most salient hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<String>,
    pub origin: CandidateOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_model_output: Option<String>,
}

impl CandidateSet {
    pub fn from_options(options: &[String]) -> Self {
        CandidateSet {
            candidates: options.to_vec(),
            origin: CandidateOrigin::DatasetOptions,
            raw_model_output: None,
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn validate(&self, k_max: usize) -> Result<(), CoreError> {
        if self.candidates.is_empty() || self.candidates.len() > k_max {
            return Err(CoreError::BadCandidateCount {
                count: self.candidates.len(),
                k_max,
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.candidates {
            let key = normalize_text(c);
            if key.is_empty() {
                return Err(CoreError::EmptyOption);
            }
            if !seen.insert(key) {
                return Err(CoreError::DuplicateCandidate(c.clone()));
            }
        }
        Ok(())
    }
}

/// How the selection stage arrived at its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// The model emitted an answer label/text that was parsed to an index.
    GenerativeLabel,
    /// Each candidate was scored and the argmax taken.
    Likelihood,
}

/// The selected intention plus per-candidate scores and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentionPrediction {
    pub selected_index: usize,
    pub selected_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    pub mode: SelectionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_model_output: Option<String>,
}

impl IntentionPrediction {
    pub fn validate(&self, candidates: &CandidateSet) -> Result<(), CoreError> {
        if self.selected_index >= candidates.len() {
            return Err(CoreError::SelectionOutOfRange {
                index: self.selected_index,
                candidates: candidates.len(),
            });
        }
        if self.selected_text != candidates.candidates[self.selected_index] {
            return Err(CoreError::SelectionTextMismatch);
        }
        if let Some(scores) = &self.scores {
            if scores.len() != candidates.len() {
                return Err(CoreError::ScoreCountMismatch {
                    scores: scores.len(),
                    candidates: candidates.len(),
                });
            }
            if argmax_lowest_index(scores) != Some(self.selected_index) {
                return Err(CoreError::SelectionNotArgmax);
            }
        }
        Ok(())
    }
}

/// Index of the maximum score; ties resolve to the lowest index.
pub fn argmax_lowest_index(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// Evaluation mode of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Select among the dataset-provided options.
    ClosedChoice,
    /// Generate a free-form answer directly.
    OpenDirect,
    /// Generate candidates, then select among them.
    OpenTwoStep,
}

impl RunMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunMode::ClosedChoice => "closed_choice",
            RunMode::OpenDirect => "open_direct",
            RunMode::OpenTwoStep => "open_two_step",
        }
    }
}

/// Decoding parameters forwarded to the backend on every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            temperature: 0.0,
            max_tokens: 256,
            seed: None,
        }
    }
}

/// Retry behaviour for transient backend failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
    pub timeout_s: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        // Long-video prompts are slow; be patient.
        RetryPolicy {
            max_retries: 5,
            base_delay_ms: 1000,
            factor: 2.0,
            timeout_s: 120,
        }
    }
}

impl RetryPolicy {
    /// Backoff delay before retry `attempt` (1-based). Non-decreasing in
    /// `attempt`.
    pub fn delay_ms(&self, attempt: u32) -> u64 {
        let factor = self.factor.max(1.0);
        let scaled = self.base_delay_ms as f64 * factor.powi(attempt.saturating_sub(1) as i32);
        scaled.min(u64::MAX as f64 / 2.0) as u64
    }
}

/// Template names used by each stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateConfig {
    pub propose: String,
    pub select: String,
    pub direct: String,
    /// Directory of template files overriding the built-ins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        TemplateConfig {
            propose: "propose_default".into(),
            select: "select_default".into(),
            direct: "direct_default".into(),
            dir: None,
        }
    }
}

/// Full configuration of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: RunMode,
    /// Upper bound on retained candidates (the top-K cap).
    pub k_candidates: usize,
    pub frames_per_video: usize,
    pub proposer_backend: String,
    pub selector_backend: String,
    pub embedder_backend: String,
    pub selection_mode: SelectionMode,
    pub decoding: DecodingParams,
    pub retry: RetryPolicy,
    pub cache_dir: PathBuf,
    /// Bound on concurrent in-flight requests per backend.
    pub max_in_flight: usize,
    pub templates: TemplateConfig,
}

impl RunConfig {
    pub fn new(mode: RunMode) -> Self {
        RunConfig {
            mode,
            k_candidates: 5,
            frames_per_video: 8,
            proposer_backend: "proposer".into(),
            selector_backend: "selector".into(),
            embedder_backend: "embedder".into(),
            selection_mode: SelectionMode::GenerativeLabel,
            decoding: DecodingParams::default(),
            retry: RetryPolicy::default(),
            cache_dir: PathBuf::from(".intentbench-cache"),
            max_in_flight: 4,
            templates: TemplateConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.k_candidates == 0 {
            return Err(CoreError::BadConfig("k_candidates must be positive".into()));
        }
        if self.mode == RunMode::OpenTwoStep && self.k_candidates < 2 {
            return Err(CoreError::BadConfig(
                "k_candidates must be >= 2 in open_two_step mode".into(),
            ));
        }
        if self.k_candidates > MAX_OPTIONS {
            return Err(CoreError::BadConfig(format!(
                "k_candidates must be <= {MAX_OPTIONS} (one answer letter per candidate)"
            )));
        }
        if self.frames_per_video == 0 {
            return Err(CoreError::BadConfig("frames_per_video must be >= 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(CoreError::BadConfig("max_in_flight must be >= 1".into()));
        }
        Ok(())
    }
}

/// Violations of core type invariants.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CoreError {
    #[error("frame manifest present but empty")]
    EmptyFrameManifest,
    #[error("frame manifest is not strictly ordered")]
    UnorderedFrameManifest,
    #[error("image media must reference exactly one frame, got {0}")]
    ImageFrameCount(usize),
    #[error("duration must be non-negative, got {0}")]
    NegativeDuration(f64),
    #[error("query is empty")]
    EmptyQuery,
    #[error("option count {0} outside 1..={MAX_OPTIONS}")]
    BadOptionCount(usize),
    #[error("option text empty after normalization")]
    EmptyOption,
    #[error("answer index {index} out of range for {options} options")]
    AnswerIndexOutOfRange { index: usize, options: usize },
    #[error("answer index {0} given but no options present")]
    AnswerIndexWithoutOptions(usize),
    #[error("candidate count {count} outside 1..={k_max}")]
    BadCandidateCount { count: usize, k_max: usize },
    #[error("duplicate candidate under normalization: {0:?}")]
    DuplicateCandidate(String),
    #[error("selected index {index} out of range for {candidates} candidates")]
    SelectionOutOfRange { index: usize, candidates: usize },
    #[error("selected_text does not match the candidate at selected_index")]
    SelectionTextMismatch,
    #[error("score count {scores} does not match candidate count {candidates}")]
    ScoreCountMismatch { scores: usize, candidates: usize },
    #[error("selected index is not the lowest-index argmax of the scores")]
    SelectionNotArgmax,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

/// Canonical text form shared by candidate dedup, answer matching and metric
/// tokenization: casefold, collapse interior whitespace to single spaces, and
/// strip leading/trailing whitespace plus trailing sentence punctuation.
/// Idempotent.
pub fn normalize_text(s: &str) -> String {
    let lowered = s.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| c.is_whitespace() || matches!(c, '.' | '!' | '?'))
        .to_string()
}
