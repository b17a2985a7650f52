//! End-to-end closed-choice evaluation: dataset options are the candidate
//! set, the selector picks one, and accuracy aggregates per category with
//! TP and TN merged into one reporting column.
//!
//! ```bash
//! cargo run -p intentbench --example closed_choice_run
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use intentbench::backend::mock::mock_script;
use intentbench::dataset::{DatasetManifest, RecordFormat, Split};
use intentbench::runner::report::{render_report, ReportFormat};
use intentbench::runner::{run, BackendRegistry, RunOptions};
use intentbench::types::{RunConfig, RunMode};

fn main() {
    let dir = tempfile::tempdir().unwrap();

    // eight records, two per category; answers rotate through the options
    let categories = ["CW", "CH", "TN", "TP"];
    let records_path = dir.path().join("records.jsonl");
    let mut file = std::fs::File::create(&records_path).unwrap();
    let mut fixtures = BTreeMap::new();
    for i in 0..8 {
        let category = categories[i % 4];
        let answer = i % 5;
        let question = format!("what does person {i} intend?");
        writeln!(
            file,
            r#"{{"id":"q{i}","video":"vid_{i:03}","question":"{question}","options":["opt a","opt b","opt c","opt d","opt e"],"answer":{answer},"type":"{category}"}}"#
        )
        .unwrap();
        // script the mock to the gold letter, except q3 which answers wrong
        let gold_letter = (b'A' + answer as u8) as char;
        let scripted = if i == 3 { 'A' } else { gold_letter };
        fixtures.insert(question, scripted.to_string());
    }
    drop(file);

    let manifest = DatasetManifest {
        name: "demo".into(),
        split: Split::Val,
        records_path,
        media_root: dir.path().join("media"),
        format: RecordFormat::IntentqaJsonl,
    };

    let mut cfg = RunConfig::new(RunMode::ClosedChoice);
    cfg.selector_backend = "scripted".into();
    cfg.cache_dir = dir.path().join("cache");

    let mut registry = BackendRegistry::new();
    registry.insert_chat("scripted", Arc::new(mock_script(fixtures)));

    let outcome = run(&manifest, &cfg, &registry, &RunOptions::default()).unwrap();
    print!("{}", render_report(&outcome.report, ReportFormat::MarkdownTable));
    println!(
        "\ncache: {} hits / {} misses",
        outcome.cache_hits, outcome.cache_misses
    );
}
