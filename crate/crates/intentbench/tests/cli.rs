//! Integration tests of the `intentbench` binary: exit codes, table output,
//! cache summaries and report re-rendering.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_intentbench")
}

fn run_cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

const CATEGORIES: [&str; 4] = ["CW", "CH", "TN", "TP"];

/// Writes records.jsonl, manifest.json, fixtures and config.toml into `dir`.
/// The scripted selector answers gold on everything except `wrong_on` ids.
fn write_fixture_workspace(dir: &Path, n: usize, wrong_on: &[&str]) -> (PathBuf, PathBuf) {
    let mut records = String::new();
    let mut fixtures = std::collections::BTreeMap::new();
    for i in 0..n {
        let category = CATEGORIES[i % 4];
        let answer = i % 5;
        let question = format!("what does person {i} intend to do?");
        records.push_str(&format!(
            r#"{{"id":"q{i}","video":"vid_{i:03}","question":"{question}","options":["opt a","opt b","opt c","opt d","opt e"],"answer":{answer},"type":"{category}"}}"#
        ));
        records.push('\n');
        let gold = (b'A' + answer as u8) as char;
        let scripted = if wrong_on.contains(&format!("q{i}").as_str()) {
            ((b'A' + ((answer + 1) % 5) as u8) as char).to_string()
        } else {
            gold.to_string()
        };
        fixtures.insert(question, scripted);
    }
    std::fs::write(dir.join("records.jsonl"), records).unwrap();

    let manifest_path = dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        r#"{"name":"cli-fixture","split":"val","records_path":"records.jsonl","media_root":"media","format":"intentqa_jsonl"}"#,
    )
    .unwrap();

    std::fs::write(
        dir.join("selector_fixtures.json"),
        serde_json::to_string(&serde_json::json!({"fixtures": fixtures, "strict": true})).unwrap(),
    )
    .unwrap();

    let config_path = dir.join("config.toml");
    std::fs::write(
        &config_path,
        r#"
[run]
selector_backend = "sel"
cache_dir = "cache"

[backends.sel]
kind = "mock-chat"
fixtures_file = "selector_fixtures.json"
"#,
    )
    .unwrap();
    (manifest_path, config_path)
}

#[test]
fn validate_reports_clean_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = write_fixture_workspace(dir.path(), 4, &[]);
    let output = run_cli(&["validate", "--manifest", manifest.to_str().unwrap()], dir.path());
    assert!(output.status.success(), "{output:?}");
    assert!(stdout(&output).contains("4 records OK"));
}

#[test]
fn validate_flags_bad_line_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = write_fixture_workspace(dir.path(), 3, &[]);
    // corrupt the second record's answer index
    let records = dir.path().join("records.jsonl");
    let text = std::fs::read_to_string(&records).unwrap();
    let broken = text.replace(r#""answer":1,"type":"CH""#, r#""answer":7,"type":"CH""#);
    assert_ne!(text, broken);
    std::fs::write(&records, broken).unwrap();

    let output = run_cli(&["validate", "--manifest", manifest.to_str().unwrap()], dir.path());
    assert_eq!(output.status.code(), Some(4));
    let text = stdout(&output);
    assert!(text.contains("line 2"), "{text}");
    assert!(text.contains("2 records OK, 1 errors"), "{text}");
}

#[test]
fn validate_check_media_lists_missing_frames() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = write_fixture_workspace(dir.path(), 2, &[]);
    // frames exist only for the first record
    let media = dir.path().join("media").join("vid_000");
    std::fs::create_dir_all(&media).unwrap();
    std::fs::write(media.join("frame_000001.jpg"), b"jpeg").unwrap();

    let output = run_cli(
        &["validate", "--manifest", manifest.to_str().unwrap(), "--check-media"],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(4));
    let text = stdout(&output);
    assert!(text.contains("sample q1: media missing"), "{text}");
    assert!(text.contains("1 records OK, 1 errors"), "{text}");
}

#[test]
fn run_prints_accuracy_table_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, config) = write_fixture_workspace(dir.path(), 4, &[]);
    let out_dir = dir.path().join("out");
    let output = run_cli(
        &[
            "run",
            "--dataset",
            manifest.to_str().unwrap(),
            "--mode",
            "closed",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--limit",
            "4",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "{output:?}");
    let text = stdout(&output);
    assert!(text.contains("| Split | CW | CH | TP&TN | Total |"), "{text}");
    assert!(text.contains("| Val | 100.00 | 100.00 | 100.00 | 100.00 |"), "{text}");
    assert!(text.contains("cache hits: 0% (0/4)"), "{text}");
    assert!(out_dir.join("report.json").exists());
    assert!(out_dir.join("report.md").exists());
    assert!(out_dir.join("trace.jsonl").exists());
}

#[test]
fn rerun_hits_cache_fully_and_reports_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, config) = write_fixture_workspace(dir.path(), 4, &["q2"]);
    let out_dir = dir.path().join("out");
    let args = [
        "run",
        "--dataset",
        manifest.to_str().unwrap(),
        "--mode",
        "closed",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ];
    let first = run_cli(&args, dir.path());
    assert!(first.status.success());
    let first_report = std::fs::read(out_dir.join("report.json")).unwrap();

    let second = run_cli(&args, dir.path());
    assert!(second.status.success());
    let text = stdout(&second);
    assert!(text.contains("cache hits: 100% (4/4)"), "{text}");
    let second_report = std::fs::read(out_dir.join("report.json")).unwrap();
    assert_eq!(first_report, second_report, "report.json must be byte-identical");
}

#[test]
fn run_two_step_prints_text_metric_table() {
    let dir = tempfile::tempdir().unwrap();
    // one open-ended record plus scripted proposer/selector mocks
    std::fs::write(
        dir.path().join("records.jsonl"),
        r#"{"id":"q0","video":"vid_000","question":"what is the person doing at the stove?","answer":"heat water for tea"}
"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("manifest.json"),
        r#"{"name":"open-fixture","split":"test","records_path":"records.jsonl","media_root":"media","format":"instit_jsonl"}"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("config.toml"),
        r#"
[run]
proposer_backend = "prop"
selector_backend = "sel"
embedder_backend = "emb"
cache_dir = "cache"

[backends.prop]
kind = "mock-chat"
default_response = "A. heat water for tea\nB. fry an egg\nC. wash dishes\nD. boil pasta\nE. warm soup"

[backends.sel]
kind = "mock-chat"
default_response = "A"

[backends.emb]
kind = "mock-embed"
dim = 32
seed = 7
"#,
    )
    .unwrap();
    let output = run_cli(
        &[
            "run",
            "--dataset",
            "manifest.json",
            "--mode",
            "open-2step",
            "--config",
            "config.toml",
            "--out",
            "out",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "{output:?}");
    let text = stdout(&output);
    assert!(text.contains("| Split | ROUGE-1 | ROUGE-L | CosSim | BERTScore-F1 |"), "{text}");
    assert!(text.contains("| Test | 100.00 | 100.00 | 100.00 | 100.00 |"), "{text}");
}

#[test]
fn report_rerenders_without_backends() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, config) = write_fixture_workspace(dir.path(), 4, &[]);
    let out_dir = dir.path().join("out");
    let run_output = run_cli(
        &[
            "run",
            "--dataset",
            manifest.to_str().unwrap(),
            "--mode",
            "closed",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(run_output.status.success());

    let md = run_cli(&["report", "--run-dir", out_dir.to_str().unwrap()], dir.path());
    assert!(md.status.success());
    assert!(stdout(&md).contains("| Split | CW | CH | TP&TN | Total |"));

    let json = run_cli(
        &["report", "--run-dir", out_dir.to_str().unwrap(), "--format", "json"],
        dir.path(),
    );
    assert!(json.status.success());
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(parsed["config"]["mode"], "closed_choice");

    // markdown re-render matches the run's own table, except the trailing
    // cache/output lines the run appends
    let run_text = stdout(&run_output);
    assert!(run_text.starts_with(&stdout(&md)[..stdout(&md).len().min(40)]));
}

#[test]
fn report_on_missing_dir_fails_with_runtime_code() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_cli(&["report", "--run-dir", "nope"], dir.path());
    assert_eq!(output.status.code(), Some(5));
}

#[test]
fn missing_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = write_fixture_workspace(dir.path(), 2, &[]);
    let output = run_cli(
        &[
            "run",
            "--dataset",
            manifest.to_str().unwrap(),
            "--mode",
            "closed",
            "--config",
            "missing.toml",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn bad_dataset_exits_with_dataset_code() {
    let dir = tempfile::tempdir().unwrap();
    let (_, config) = write_fixture_workspace(dir.path(), 2, &[]);
    let mut file = std::fs::File::create(dir.path().join("records.jsonl")).unwrap();
    writeln!(file, "{{bad json").unwrap();
    drop(file);
    let output = run_cli(
        &[
            "run",
            "--dataset",
            "manifest.json",
            "--mode",
            "closed",
            "--config",
            config.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(4));
}

#[test]
fn usage_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_cli(&["run", "--no-such-flag"], dir.path());
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn limit_processes_first_n_records_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, config) = write_fixture_workspace(dir.path(), 8, &[]);
    let out_dir = dir.path().join("out");
    let output = run_cli(
        &[
            "run",
            "--dataset",
            manifest.to_str().unwrap(),
            "--mode",
            "closed",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--limit",
            "3",
        ],
        dir.path(),
    );
    assert!(output.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    let ids: Vec<&str> =
        report["samples"].as_array().unwrap().iter().map(|s| s["id"].as_str().unwrap()).collect();
    assert_eq!(ids, vec!["q0", "q1", "q2"]);
}
