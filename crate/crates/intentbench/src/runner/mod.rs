//! End-to-end run orchestration: load the split, fan samples out to a
//! bounded worker pool, route every backend exchange through the response
//! cache, and aggregate the outcomes into an [`EvalReport`].

pub mod cache;
pub mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use crate::backend::{BackendError, BackendRequest, ChatBackend, EmbeddingBackend};
use crate::dataset::{load, resolve_frames, DatasetError, DatasetManifest};
use crate::metrics::{bertscore_f1, cosine, rouge1, rouge_l, TokenSeq};
use crate::proposer::{propose, stage_messages, ProposerTemplates};
use crate::selector::{select, SelectorTemplates};
use crate::template::{load_template, PromptTemplate, TemplateError};
use crate::types::{
    normalize_text, CandidateSet, GroundTruth, ObservationSample, RunConfig, RunMode,
};

use cache::{CachingChatBackend, CachingEmbeddingBackend, ResponseCache};
use report::{
    aggregate, write_report_files, ConfigSnapshot, EvalReport, MetricKnobs, PredictionRecord,
    ReportError, SampleRecord, TextScores,
};

/// Named backends available to runs.
#[derive(Default)]
pub struct BackendRegistry {
    chat: BTreeMap<String, Arc<dyn ChatBackend>>,
    embed: BTreeMap<String, Arc<dyn EmbeddingBackend>>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_chat(&mut self, id: impl Into<String>, backend: Arc<dyn ChatBackend>) {
        self.chat.insert(id.into(), backend);
    }

    pub fn insert_embed(&mut self, id: impl Into<String>, backend: Arc<dyn EmbeddingBackend>) {
        self.embed.insert(id.into(), backend);
    }

    pub fn chat(&self, id: &str) -> Result<&Arc<dyn ChatBackend>, RunnerError> {
        self.chat.get(id).ok_or_else(|| {
            RunnerError::Config(format!("no chat backend {id:?} configured"))
        })
    }

    pub fn embed(&self, id: &str) -> Result<&Arc<dyn EmbeddingBackend>, RunnerError> {
        self.embed.get(id).ok_or_else(|| {
            RunnerError::Config(format!("no embedding backend {id:?} configured"))
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Process only the first N records of the split.
    pub limit: Option<usize>,
    /// Ignore cached entries and refresh them with live calls.
    pub refresh_cache: bool,
    /// Skip malformed records instead of aborting the run.
    pub lenient: bool,
    /// When set, report files are written here.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: EvalReport,
    pub cache_hits: u64,
    pub cache_misses: u64,
    /// Malformed records skipped in lenient mode.
    pub skipped_records: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("cache directory: {0}")]
    Cache(std::io::Error),
}

struct RunContext<'a> {
    cfg: &'a RunConfig,
    manifest: &'a DatasetManifest,
    proposer: Option<CachingChatBackend<'a>>,
    selector: Option<CachingChatBackend<'a>>,
    embedder: Option<CachingEmbeddingBackend<'a>>,
    proposer_templates: Option<ProposerTemplates>,
    selector_templates: Option<SelectorTemplates>,
    direct_template: Option<PromptTemplate>,
}

/// Runs one evaluation over the split described by `manifest` and returns
/// the aggregated report. Per-sample backend and parse failures are recorded
/// in the report, never dropped; configuration and (strict-mode) dataset
/// problems abort the run.
pub fn run(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    backends: &BackendRegistry,
    options: &RunOptions,
) -> Result<RunOutcome, RunnerError> {
    cfg.validate().map_err(|e| RunnerError::Config(e.to_string()))?;

    let (samples, skipped_records) = collect_samples(manifest, cfg, options)?;

    let cache = ResponseCache::open(&cfg.cache_dir, options.refresh_cache)
        .map_err(RunnerError::Cache)?;

    let needs_proposer = matches!(cfg.mode, RunMode::OpenDirect | RunMode::OpenTwoStep);
    let needs_selector = matches!(cfg.mode, RunMode::ClosedChoice | RunMode::OpenTwoStep);
    let needs_embedder = matches!(cfg.mode, RunMode::OpenDirect | RunMode::OpenTwoStep);

    let proposer_backend =
        if needs_proposer { Some(backends.chat(&cfg.proposer_backend)?) } else { None };
    let selector_backend =
        if needs_selector { Some(backends.chat(&cfg.selector_backend)?) } else { None };
    let embed_backend =
        if needs_embedder { Some(backends.embed(&cfg.embedder_backend)?) } else { None };

    let mut template_versions = BTreeMap::new();
    let proposer_templates = if cfg.mode == RunMode::OpenTwoStep {
        let t = ProposerTemplates::load(cfg)?;
        template_versions.insert(t.main.name.clone(), t.main.version.clone());
        template_versions.insert(t.retry.name.clone(), t.retry.version.clone());
        Some(t)
    } else {
        None
    };
    let selector_templates = if needs_selector {
        let t = SelectorTemplates::load(cfg)?;
        template_versions.insert(t.main.name.clone(), t.main.version.clone());
        template_versions.insert(t.retry.name.clone(), t.retry.version.clone());
        Some(t)
    } else {
        None
    };
    let direct_template = if cfg.mode == RunMode::OpenDirect {
        let t = load_template(cfg.templates.dir.as_deref(), &cfg.templates.direct)?;
        t.require(&["query"])?;
        template_versions.insert(t.name.clone(), t.version.clone());
        Some(t)
    } else {
        None
    };

    let context = RunContext {
        cfg,
        manifest,
        proposer: proposer_backend
            .map(|b| CachingChatBackend { inner: b.as_ref(), cache: &cache }),
        selector: selector_backend
            .map(|b| CachingChatBackend { inner: b.as_ref(), cache: &cache }),
        embedder: embed_backend
            .map(|b| CachingEmbeddingBackend { inner: b.as_ref(), cache: &cache }),
        proposer_templates,
        selector_templates,
        direct_template,
    };

    // Sample-parallel map with a bounded worker pool; the pool size is the
    // per-backend in-flight bound since each worker holds one request at a
    // time. Results land in input order regardless of completion order.
    let records: Vec<Mutex<Option<SampleRecord>>> =
        samples.iter().map(|_| Mutex::new(None)).collect();
    let worker_count = cfg.max_in_flight.min(samples.len()).max(1);
    let next_index = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            scope.spawn(|| loop {
                let index = next_index.fetch_add(1, Ordering::SeqCst);
                if index >= samples.len() {
                    break;
                }
                let record = evaluate_sample(&samples[index], &context);
                *records[index].lock().expect("result slot") = Some(record);
            });
        }
    });
    let sample_records: Vec<SampleRecord> = records
        .into_iter()
        .map(|slot| slot.into_inner().expect("slot lock").expect("record written"))
        .collect();

    let aggregates = aggregate(cfg.mode, &sample_records);
    let mut backend_labels = BTreeMap::new();
    if let Some(b) = &context.proposer {
        backend_labels.insert("proposer".to_string(), format!("{} ({})", b.id(), b.model_id()));
    }
    if let Some(b) = &context.selector {
        backend_labels.insert("selector".to_string(), format!("{} ({})", b.id(), b.model_id()));
    }
    if let Some(b) = &context.embedder {
        backend_labels.insert("embedder".to_string(), b.id().to_string());
    }
    let config_snapshot = ConfigSnapshot {
        mode: cfg.mode,
        dataset: manifest.name.clone(),
        split: manifest.split,
        format: manifest.format,
        k_candidates: cfg.k_candidates,
        frames_per_video: cfg.frames_per_video,
        selection_mode: cfg.selection_mode,
        backends: backend_labels,
        templates: template_versions,
        decoding: cfg.decoding.clone(),
        tie_break: "lowest_index".into(),
        candidate_ranking: "emission_order".into(),
        likelihood_scoring: "letter_token".into(),
        metric_knobs: MetricKnobs::default(),
        limit: options.limit,
    };
    let run_id = derive_run_id(&config_snapshot, manifest);
    let report = EvalReport {
        run_id,
        config: config_snapshot,
        samples: sample_records,
        aggregates,
    };

    if let Some(out_dir) = &options.out_dir {
        write_report_files(&report, out_dir)?;
    }

    Ok(RunOutcome {
        report,
        cache_hits: cache.hits(),
        cache_misses: cache.misses(),
        skipped_records,
    })
}

/// Reads the first `limit` records, applying strict/lenient error handling
/// and the closed-mode options precondition.
fn collect_samples(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    options: &RunOptions,
) -> Result<(Vec<ObservationSample>, usize), RunnerError> {
    let mut samples = Vec::new();
    let mut skipped = 0usize;
    for result in load(manifest)?.take(options.limit.unwrap_or(usize::MAX)) {
        match result {
            Ok(sample) => {
                if cfg.mode == RunMode::ClosedChoice && sample.options.is_none() {
                    let err = DatasetError::Manifest(format!(
                        "closed_choice requires options; sample {:?} has none",
                        sample.id
                    ));
                    if options.lenient {
                        log::warn!("skipping sample: {err}");
                        skipped += 1;
                        continue;
                    }
                    return Err(err.into());
                }
                samples.push(sample);
            }
            Err(err) if options.lenient => {
                log::warn!("skipping malformed record: {err}");
                skipped += 1;
            }
            Err(err) => return Err(err.into()),
        }
    }
    Ok((samples, skipped))
}

fn derive_run_id(snapshot: &ConfigSnapshot, manifest: &DatasetManifest) -> String {
    let material = serde_json::json!({
        "config": snapshot,
        "records_path": manifest.records_path.display().to_string(),
    });
    let digest = Sha256::digest(serde_json::to_vec(&material).expect("snapshot serializes"));
    hex::encode(&digest[..6])
}

/// Gold option index of a sample: the index itself, or the option whose
/// normalized text equals the normalized reference.
fn gold_index(sample: &ObservationSample) -> Option<usize> {
    match (&sample.ground_truth, &sample.options) {
        (Some(GroundTruth::Index(i)), Some(options)) if *i < options.len() => Some(*i),
        (Some(GroundTruth::Text(t)), Some(options)) => {
            let key = normalize_text(t);
            options.iter().position(|o| normalize_text(o) == key)
        }
        _ => None,
    }
}

fn evaluate_sample(sample: &ObservationSample, ctx: &RunContext<'_>) -> SampleRecord {
    let mut record = SampleRecord {
        id: sample.id.clone(),
        category: sample.category,
        candidates: None,
        prediction: None,
        correct: None,
        text_scores: None,
        failure: None,
    };

    // frames resolve lazily; offline fixtures without media still run
    let sample = match resolve_frames(&ctx.manifest.media_root, &sample.media) {
        Ok(media) => {
            let mut s = sample.clone();
            s.media = media;
            s
        }
        Err(e) => {
            log::debug!("frames unresolved for {}: {e}", sample.id);
            sample.clone()
        }
    };

    let outcome = match ctx.cfg.mode {
        RunMode::ClosedChoice => run_closed(&sample, ctx, &mut record),
        RunMode::OpenDirect => run_open_direct(&sample, ctx, &mut record),
        RunMode::OpenTwoStep => run_open_two_step(&sample, ctx, &mut record),
    };
    if let Err(failure) = outcome {
        record.failure = Some(failure);
        if ctx.cfg.mode == RunMode::ClosedChoice {
            record.correct = Some(false);
        }
    }
    record
}

fn run_closed(
    sample: &ObservationSample,
    ctx: &RunContext<'_>,
    record: &mut SampleRecord,
) -> Result<(), String> {
    let options = sample.options.as_ref().ok_or("closed mode requires options")?;
    let gold = gold_index(sample).ok_or("sample has no resolvable gold index")?;
    let cands = CandidateSet::from_options(options);
    record.candidates = Some(cands.candidates.clone());
    let backend = ctx.selector.as_ref().expect("selector backend");
    let templates = ctx.selector_templates.as_ref().expect("selector templates");
    let pred =
        select(sample, &cands, ctx.cfg, backend, templates).map_err(|e| e.to_string())?;
    record.prediction = Some(PredictionRecord {
        index: Some(pred.selected_index),
        text: pred.selected_text.clone(),
    });
    record.correct = Some(pred.selected_index == gold);
    Ok(())
}

fn run_open_direct(
    sample: &ObservationSample,
    ctx: &RunContext<'_>,
    record: &mut SampleRecord,
) -> Result<(), String> {
    let reference = sample.reference_text().ok_or("sample has no reference text")?.to_string();
    let backend = ctx.proposer.as_ref().expect("generator backend");
    let template = ctx.direct_template.as_ref().expect("direct template");
    let bindings = BTreeMap::from([("query", sample.query.clone())]);
    let user_text = template.render_user(&bindings).map_err(|e| e.to_string())?;
    let messages = stage_messages(
        &template.system_text,
        user_text,
        &sample.media,
        ctx.cfg.frames_per_video,
    )
    .map_err(|e| e.to_string())?;
    let request = BackendRequest::new(backend.model_id(), messages)
        .with_decoding(ctx.cfg.decoding.clone());
    let response = backend.complete(&request).map_err(|e| e.to_string())?;
    record.prediction = Some(PredictionRecord { index: None, text: response.text.clone() });
    record.text_scores = Some(score_text(&response.text, &reference, ctx)?);
    Ok(())
}

fn run_open_two_step(
    sample: &ObservationSample,
    ctx: &RunContext<'_>,
    record: &mut SampleRecord,
) -> Result<(), String> {
    let reference = sample.reference_text().ok_or("sample has no reference text")?.to_string();
    let proposer_backend = ctx.proposer.as_ref().expect("proposer backend");
    let proposer_templates = ctx.proposer_templates.as_ref().expect("proposer templates");
    let cands = propose(sample, ctx.cfg, proposer_backend, proposer_templates)
        .map_err(|e| e.to_string())?;
    record.candidates = Some(cands.candidates.clone());

    let selector_backend = ctx.selector.as_ref().expect("selector backend");
    let selector_templates = ctx.selector_templates.as_ref().expect("selector templates");
    let pred = select(sample, &cands, ctx.cfg, selector_backend, selector_templates)
        .map_err(|e| e.to_string())?;
    record.prediction = Some(PredictionRecord {
        index: Some(pred.selected_index),
        text: pred.selected_text.clone(),
    });
    record.text_scores = Some(score_text(&pred.selected_text, &reference, ctx)?);
    Ok(())
}

/// Scores a predicted text against the reference with all four open-
/// vocabulary metrics. Sides that normalize to nothing score zero.
fn score_text(
    prediction: &str,
    reference: &str,
    ctx: &RunContext<'_>,
) -> Result<TextScores, String> {
    let embedder = ctx.embedder.as_ref().expect("embedding backend");
    let cand_tokens = TokenSeq::tokenize(prediction);
    let ref_tokens = TokenSeq::tokenize(reference);
    let rouge1_f1 = rouge1(&cand_tokens, &ref_tokens).f1;
    let rouge_l_f1 = rouge_l(&cand_tokens, &ref_tokens).f1;

    let cos_sim = if normalize_text(prediction).is_empty() || normalize_text(reference).is_empty()
    {
        0.0
    } else {
        let vectors = embedder
            .embed(&[prediction.to_string(), reference.to_string()])
            .map_err(|e| e.to_string())?;
        cosine(&vectors[0], &vectors[1]).map_err(|e| e.to_string())?.value
    };

    let bert = if cand_tokens.is_empty() || ref_tokens.is_empty() {
        0.0
    } else {
        let cand_vectors =
            embedder.embed(cand_tokens.as_slice()).map_err(|e| e.to_string())?;
        let ref_vectors = embedder.embed(ref_tokens.as_slice()).map_err(|e| e.to_string())?;
        bertscore_f1(&cand_vectors, &ref_vectors).map_err(|e| e.to_string())?.f1
    };

    Ok(TextScores {
        rouge1: rouge1_f1,
        rouge_l: rouge_l_f1,
        cos_sim,
        bertscore_f1: bert,
    })
}

// so callers can speak of backend errors uniformly in messages
impl From<BackendError> for RunnerError {
    fn from(e: BackendError) -> Self {
        RunnerError::Config(e.to_string())
    }
}
