//! Evaluation reports: per-sample records, per-category aggregates and the
//! JSON / markdown renderers.
//!
//! JSON is the canonical machine format (fixed key order, so identical
//! reports are byte-identical); markdown mirrors the benchmark's table
//! layout with accuracy columns {CW, CH, TP&TN, Total} for closed runs and
//! {ROUGE-1, ROUGE-L, CosSim, BERTScore-F1} for open runs. Values are
//! stored as fractions and rendered as percentages with two decimals.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{RecordFormat, Split};
use crate::types::{Category, DecodingParams, RunMode, SelectionMode};

/// Display bucket of a category; TP and TN merge into one reporting column.
pub fn display_category(category: Category) -> &'static str {
    match category {
        Category::CW => "CW",
        Category::CH => "CH",
        Category::TN | Category::TP => "TP&TN",
        Category::Other => "OTHER",
    }
}

/// Fixed column order of the accuracy table.
pub const ACCURACY_COLUMNS: [&str; 4] = ["CW", "CH", "TP&TN", "OTHER"];

/// Everything needed to reproduce a run, captured into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub mode: RunMode,
    pub dataset: String,
    pub split: Split,
    pub format: RecordFormat,
    pub k_candidates: usize,
    pub frames_per_video: usize,
    pub selection_mode: SelectionMode,
    /// role -> "backend_id (model_id)"
    pub backends: BTreeMap<String, String>,
    /// template name -> version
    pub templates: BTreeMap<String, String>,
    pub decoding: DecodingParams,
    pub tie_break: String,
    pub candidate_ranking: String,
    pub likelihood_scoring: String,
    pub metric_knobs: MetricKnobs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricKnobs {
    /// Which ROUGE figure the headline cells report.
    pub rouge_reported: String,
    pub bertscore_idf: bool,
    pub bertscore_rescale: bool,
    pub corpus_aggregation: String,
}

impl Default for MetricKnobs {
    fn default() -> Self {
        MetricKnobs {
            rouge_reported: "f1".into(),
            bertscore_idf: false,
            bertscore_rescale: false,
            corpus_aggregation: "unweighted_mean".into(),
        }
    }
}

/// The four open-vocabulary text metrics of one sample (F1 for the ROUGE and
/// BERTScore entries, raw cosine for `cos_sim`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TextScores {
    pub rouge1: f64,
    pub rouge_l: f64,
    pub cos_sim: f64,
    pub bertscore_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub text: String,
}

/// One sample's outcome. Failed samples stay in the report, marked and
/// scored as incorrect/zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<PredictionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_scores: Option<TextScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Per-display-category accounting. `total = correct + incorrect + failed`;
/// failed samples are also counted in `incorrect` for accuracy purposes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryTally {
    pub total: usize,
    pub correct: usize,
    pub incorrect: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedAggregates {
    /// display category -> accuracy fraction; keys absent when the split has
    /// no samples of that category.
    pub accuracy: BTreeMap<String, f64>,
    /// Micro average: total correct over total samples.
    pub total_micro: f64,
    /// Macro average: mean of the per-category accuracies.
    pub total_macro: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenAggregates {
    pub rouge1: f64,
    pub rouge_l: f64,
    pub cos_sim: f64,
    pub bertscore_f1: f64,
    /// display category -> mean scores of that category's samples.
    pub per_category: BTreeMap<String, TextScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    /// display category -> tallies; always includes every category present.
    pub tallies: BTreeMap<String, CategoryTally>,
    pub total_samples: usize,
    pub failed_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed: Option<ClosedAggregates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open: Option<OpenAggregates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub config: ConfigSnapshot,
    pub samples: Vec<SampleRecord>,
    pub aggregates: Aggregates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    MarkdownTable,
}

/// Aggregates sample records into the report tallies and mode aggregates.
/// Open-mode text means treat failed samples as all-zero scores.
pub fn aggregate(mode: RunMode, samples: &[SampleRecord]) -> Aggregates {
    let mut tallies: BTreeMap<String, CategoryTally> = BTreeMap::new();
    let mut failed_samples = 0;
    for sample in samples {
        let tally = tallies.entry(display_category(sample.category).to_string()).or_default();
        tally.total += 1;
        if sample.failure.is_some() {
            tally.failed += 1;
            tally.incorrect += 1;
            failed_samples += 1;
        } else if sample.correct == Some(true) {
            tally.correct += 1;
        } else {
            tally.incorrect += 1;
        }
    }

    let closed = (mode == RunMode::ClosedChoice).then(|| {
        let mut accuracy = BTreeMap::new();
        for (name, tally) in &tallies {
            if tally.total > 0 {
                accuracy.insert(name.clone(), tally.correct as f64 / tally.total as f64);
            }
        }
        let correct: usize = tallies.values().map(|t| t.correct).sum();
        let total: usize = tallies.values().map(|t| t.total).sum();
        let total_micro = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        let total_macro = if accuracy.is_empty() {
            0.0
        } else {
            accuracy.values().sum::<f64>() / accuracy.len() as f64
        };
        ClosedAggregates { accuracy, total_micro, total_macro }
    });

    let open = (mode != RunMode::ClosedChoice).then(|| {
        let mut sums: BTreeMap<String, (TextScores, usize)> = BTreeMap::new();
        let mut total = TextScores::default();
        for sample in samples {
            let scores = sample.text_scores.unwrap_or_default();
            total.rouge1 += scores.rouge1;
            total.rouge_l += scores.rouge_l;
            total.cos_sim += scores.cos_sim;
            total.bertscore_f1 += scores.bertscore_f1;
            let (sum, count) =
                sums.entry(display_category(sample.category).to_string()).or_default();
            sum.rouge1 += scores.rouge1;
            sum.rouge_l += scores.rouge_l;
            sum.cos_sim += scores.cos_sim;
            sum.bertscore_f1 += scores.bertscore_f1;
            *count += 1;
        }
        let n = samples.len().max(1) as f64;
        let per_category = sums
            .into_iter()
            .map(|(name, (sum, count))| {
                let c = count.max(1) as f64;
                (
                    name,
                    TextScores {
                        rouge1: sum.rouge1 / c,
                        rouge_l: sum.rouge_l / c,
                        cos_sim: sum.cos_sim / c,
                        bertscore_f1: sum.bertscore_f1 / c,
                    },
                )
            })
            .collect();
        OpenAggregates {
            rouge1: total.rouge1 / n,
            rouge_l: total.rouge_l / n,
            cos_sim: total.cos_sim / n,
            bertscore_f1: total.bertscore_f1 / n,
            per_category,
        }
    });

    Aggregates {
        tallies,
        total_samples: samples.len(),
        failed_samples,
        closed,
        open,
    }
}

/// Fraction to a `84.10`-style percentage cell.
fn percent_cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:.2}", v * 100.0),
        None => "—".to_string(),
    }
}

fn split_label(split: Split) -> &'static str {
    match split {
        Split::Train => "Train",
        Split::Val => "Val",
        Split::Test => "Test",
    }
}

/// Renders a report. JSON is canonical and byte-stable; markdown reproduces
/// the benchmark table columns. Idempotent given the same report.
pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(report).expect("report serializes");
            text.push('\n');
            text
        }
        ReportFormat::MarkdownTable => render_markdown(report),
    }
}

fn render_markdown(report: &EvalReport) -> String {
    let mut out = String::new();
    let config = &report.config;
    out.push_str(&format!("# Run {}\n\n", report.run_id));
    out.push_str(&format!(
        "- mode: `{}`\n- dataset: `{}` ({} split)\n- samples: {} ({} failed)\n",
        config.mode.as_str(),
        config.dataset,
        config.split.as_str(),
        report.aggregates.total_samples,
        report.aggregates.failed_samples,
    ));
    for (role, backend) in &config.backends {
        out.push_str(&format!("- {role} backend: `{backend}`\n"));
    }
    let templates: Vec<String> =
        config.templates.iter().map(|(name, version)| format!("{name}@{version}")).collect();
    if !templates.is_empty() {
        out.push_str(&format!("- templates: {}\n", templates.join(", ")));
    }
    out.push('\n');

    if let Some(closed) = &report.aggregates.closed {
        out.push_str("## Accuracy (%)\n\n");
        let has_other = report.aggregates.tallies.contains_key("OTHER");
        let mut columns: Vec<&str> = vec!["CW", "CH", "TP&TN"];
        if has_other {
            columns.push("OTHER");
        }
        out.push_str(&format!("| Split | {} | Total |\n", columns.join(" | ")));
        out.push_str(&format!("|---|{}---|\n", "---|".repeat(columns.len())));
        let cells: Vec<String> = columns
            .iter()
            .map(|c| percent_cell(closed.accuracy.get(*c).copied()))
            .collect();
        out.push_str(&format!(
            "| {} | {} | {} |\n",
            split_label(config.split),
            cells.join(" | "),
            percent_cell(Some(closed.total_micro)),
        ));
        out.push_str(&format!(
            "\nTotal is the micro average over samples; the macro average over categories is {}.\n",
            percent_cell(Some(closed.total_macro)),
        ));
    }

    if let Some(open) = &report.aggregates.open {
        out.push_str("## Open-vocabulary metrics (%)\n\n");
        out.push_str("| Split | ROUGE-1 | ROUGE-L | CosSim | BERTScore-F1 |\n");
        out.push_str("|---|---|---|---|---|\n");
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            split_label(config.split),
            percent_cell(Some(open.rouge1)),
            percent_cell(Some(open.rouge_l)),
            percent_cell(Some(open.cos_sim)),
            percent_cell(Some(open.bertscore_f1)),
        ));
        if !open.per_category.is_empty() {
            out.push_str("\n| Category | ROUGE-1 | ROUGE-L | CosSim | BERTScore-F1 |\n");
            out.push_str("|---|---|---|---|---|\n");
            for (name, scores) in &open.per_category {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} |\n",
                    name,
                    percent_cell(Some(scores.rouge1)),
                    percent_cell(Some(scores.rouge_l)),
                    percent_cell(Some(scores.cos_sim)),
                    percent_cell(Some(scores.bertscore_f1)),
                ));
            }
        }
    }

    out.push_str("\n## Per-category accounting\n\n");
    out.push_str("| Category | Samples | Correct | Incorrect | Failed |\n");
    out.push_str("|---|---|---|---|---|\n");
    for (name, tally) in &report.aggregates.tallies {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            name, tally.total, tally.correct, tally.incorrect, tally.failed
        ));
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid report file {path}: {message}")]
    Invalid { path: String, message: String },
}

fn atomic_write(path: &Path, contents: &str) -> Result<(), ReportError> {
    let io_err = |source| ReportError::Io { path: path.display().to_string(), source };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    std::fs::write(&tmp, contents).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

/// Writes `report.json`, `report.md` and the per-sample `trace.jsonl` into
/// `dir`, each atomically.
pub fn write_report_files(report: &EvalReport, dir: &Path) -> Result<(), ReportError> {
    atomic_write(&dir.join("report.json"), &render_report(report, ReportFormat::Json))?;
    atomic_write(&dir.join("report.md"), &render_report(report, ReportFormat::MarkdownTable))?;
    let mut trace = String::new();
    for sample in &report.samples {
        trace.push_str(&serde_json::to_string(sample).expect("sample serializes"));
        trace.push('\n');
    }
    atomic_write(&dir.join("trace.jsonl"), &trace)
}

/// Reads `report.json` back from a run directory.
pub fn read_report(dir: &Path) -> Result<EvalReport, ReportError> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ReportError::Invalid {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
