//! End-to-end two-step evaluation in the open-vocabulary setting: the
//! proposer generates candidate goals, the selector picks one, and the
//! selected text is scored against the reference with all four text metrics.
//!
//! ```bash
//! cargo run -p intentbench --example open_two_step_run
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use intentbench::backend::mock::{mock_script, MockEmbedder};
use intentbench::dataset::{DatasetManifest, RecordFormat, Split};
use intentbench::runner::report::{render_report, ReportFormat};
use intentbench::runner::{run, BackendRegistry, RunOptions};
use intentbench::types::{RunConfig, RunMode};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let records_path = dir.path().join("records.jsonl");
    let mut file = std::fs::File::create(&records_path).unwrap();
    // open-ended records: the answer is free-form reference text
    writeln!(
        file,
        r#"{{"id":"q0","video":"vid_000","question":"what is the person at the stove doing?","answer":"heat water for tea"}}"#
    )
    .unwrap();
    writeln!(
        file,
        r#"{{"id":"q1","video":"vid_001","question":"what does the person at the sink want?","answer":"wash the dishes"}}"#
    )
    .unwrap();
    drop(file);

    let manifest = DatasetManifest {
        name: "demo-open".into(),
        split: Split::Val,
        records_path,
        media_root: dir.path().join("media"),
        format: RecordFormat::InstitJsonl,
    };

    let mut cfg = RunConfig::new(RunMode::OpenTwoStep);
    cfg.proposer_backend = "proposer".into();
    cfg.selector_backend = "selector".into();
    cfg.embedder_backend = "embedder".into();
    cfg.cache_dir = dir.path().join("cache");

    let mut registry = BackendRegistry::new();
    registry.insert_chat(
        "proposer",
        Arc::new(mock_script(BTreeMap::from([
            (
                "stove".to_string(),
                "A. heat water for tea\nB. fry an egg\nC. clean the stove\nD. boil pasta\nE. warm up soup".to_string(),
            ),
            (
                "sink".to_string(),
                "A. wash the dishes\nB. fill a bottle\nC. rinse vegetables\nD. wash hands\nE. clean the sink".to_string(),
            ),
        ]))),
    );
    // the selector picks the first candidate for the stove scene, the wrong
    // one for the sink scene, so the table shows both perfect and partial rows
    registry.insert_chat(
        "selector",
        Arc::new(mock_script(BTreeMap::from([
            ("stove".to_string(), "A".to_string()),
            ("sink".to_string(), "C".to_string()),
        ]))),
    );
    registry.insert_embed("embedder", Arc::new(MockEmbedder::new(32, 7)));

    let outcome = run(&manifest, &cfg, &registry, &RunOptions::default()).unwrap();
    for sample in &outcome.report.samples {
        let scores = sample.text_scores.unwrap();
        println!(
            "{}: predicted {:?}, ROUGE-1 {:.2}, ROUGE-L {:.2}, CosSim {:.2}, BERTScore {:.2}",
            sample.id,
            sample.prediction.as_ref().unwrap().text,
            scores.rouge1,
            scores.rouge_l,
            scores.cos_sim,
            scores.bertscore_f1,
        );
    }
    println!();
    print!("{}", render_report(&outcome.report, ReportFormat::MarkdownTable));
}
