//! Report rendering: canonical JSON and the benchmark-shaped markdown
//! tables, from a report built out of fixed aggregate values.
//!
//! ```bash
//! cargo run -p intentbench --example report_rendering
//! ```

use std::collections::BTreeMap;

use intentbench::dataset::{RecordFormat, Split};
use intentbench::runner::report::{
    render_report, Aggregates, CategoryTally, ClosedAggregates, ConfigSnapshot, EvalReport,
    MetricKnobs, OpenAggregates, ReportFormat,
};
use intentbench::types::{DecodingParams, RunMode, SelectionMode};

fn snapshot(mode: RunMode) -> ConfigSnapshot {
    ConfigSnapshot {
        mode,
        dataset: "fixture".into(),
        split: Split::Test,
        format: RecordFormat::IntentqaJsonl,
        k_candidates: 5,
        frames_per_video: 8,
        selection_mode: SelectionMode::GenerativeLabel,
        backends: BTreeMap::new(),
        templates: BTreeMap::new(),
        decoding: DecodingParams::default(),
        tie_break: "lowest_index".into(),
        candidate_ranking: "emission_order".into(),
        likelihood_scoring: "letter_token".into(),
        metric_knobs: MetricKnobs::default(),
        limit: None,
    }
}

fn main() {
    // a closed-mode report with externally provided aggregate cells
    let closed = EvalReport {
        run_id: "demo-closed".into(),
        config: snapshot(RunMode::ClosedChoice),
        samples: Vec::new(),
        aggregates: Aggregates {
            tallies: BTreeMap::from([
                ("CW".to_string(), CategoryTally { total: 100, correct: 84, incorrect: 16, failed: 0 }),
                ("CH".to_string(), CategoryTally { total: 100, correct: 89, incorrect: 11, failed: 0 }),
                ("TP&TN".to_string(), CategoryTally { total: 100, correct: 84, incorrect: 16, failed: 0 }),
            ]),
            total_samples: 300,
            failed_samples: 0,
            closed: Some(ClosedAggregates {
                accuracy: BTreeMap::from([
                    ("CW".to_string(), 0.8410),
                    ("CH".to_string(), 0.8860),
                    ("TP&TN".to_string(), 0.8395),
                ]),
                total_micro: 0.8515,
                total_macro: 0.8555,
            }),
            open: None,
        },
    };
    println!("{}", render_report(&closed, ReportFormat::MarkdownTable));

    // an open-mode report with the four text metrics
    let mut open = closed.clone();
    open.run_id = "demo-open".into();
    open.config.mode = RunMode::OpenTwoStep;
    open.aggregates.closed = None;
    open.aggregates.open = Some(OpenAggregates {
        rouge1: 0.1918,
        rouge_l: 0.1891,
        cos_sim: 0.3467,
        bertscore_f1: 0.8720,
        per_category: BTreeMap::new(),
    });
    println!("{}", render_report(&open, ReportFormat::MarkdownTable));

    // JSON is the canonical machine format; render -> parse -> render is stable
    let json = render_report(&closed, ReportFormat::Json);
    let parsed: EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(render_report(&parsed, ReportFormat::Json), json);
    println!("canonical JSON round-trips byte-identically ({} bytes)", json.len());
}
