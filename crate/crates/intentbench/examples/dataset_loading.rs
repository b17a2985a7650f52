//! JSONL dataset ingestion: valid records stream through, malformed lines
//! surface as per-line errors the caller can skip (lenient) or abort on
//! (strict).
//!
//! ```bash
//! cargo run -p intentbench --example dataset_loading
//! ```

use std::io::Write;

use intentbench::dataset::{load, DatasetManifest, RecordFormat, Split};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let records_path = dir.path().join("records.jsonl");
    let mut file = std::fs::File::create(&records_path).unwrap();
    writeln!(
        file,
        r#"{{"id":"q1","video":"vid_001","question":"why does the man point at the screen?","options":["guide the child's attention","stretch his arm","wave at the camera","push the door open","grab a cup"],"answer":0,"type":"CW"}}"#
    )
    .unwrap();
    // a broken line: answer index out of range
    writeln!(
        file,
        r#"{{"id":"q2","video":"vid_002","question":"what next?","options":["a","b","c","d","e"],"answer":9,"type":"TN"}}"#
    )
    .unwrap();
    // an open-ended instance-level record (no options, text answer)
    writeln!(
        file,
        r#"{{"id":"i1","image":"img_01.jpg","question":"what is <1> doing?","answer":"pouring water into a cup"}}"#
    )
    .unwrap();
    drop(file);

    let intentqa = DatasetManifest {
        name: "demo".into(),
        split: Split::Val,
        records_path: records_path.clone(),
        media_root: dir.path().join("media"),
        format: RecordFormat::IntentqaJsonl,
    };
    println!("loading as intentqa_jsonl:");
    for result in load(&intentqa).unwrap() {
        match result {
            Ok(sample) => println!("  ok  {} [{}] {:?}", sample.id, sample.category.as_str(), sample.query),
            Err(e) => println!("  err {e}"),
        }
    }

    let instit = DatasetManifest { format: RecordFormat::InstitJsonl, ..intentqa };
    println!("\nloading as instit_jsonl (open-ended record now valid):");
    for result in load(&instit).unwrap() {
        match result {
            Ok(sample) => println!(
                "  ok  {} options={:?} reference={:?}",
                sample.id,
                sample.options.as_ref().map(Vec::len),
                sample.reference_text()
            ),
            Err(e) => println!("  err {e}"),
        }
    }
}
