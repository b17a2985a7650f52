//! JSONL dataset ingestion and frame-manifest management.
//!
//! Records are one JSON object per line:
//!
//! ```json
//! {"id":"q1","video":"vid_001","question":"...","options":["..."],"answer":0,"type":"CW"}
//! ```
//!
//! The `intentqa_jsonl` format requires a `video`, exactly five options, an
//! index answer and a CW/CH/TN/TP category. The `instit_jsonl` format takes
//! `video` or `image` media and permits either multiple-choice records
//! (options + index answer) or open-ended ones (no options, free-text
//! answer). See `schemas/records.schema.json` for the machine-readable
//! schema.

use std::fs::File;
use std::io::{BufRead, BufReader, Lines};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::types::{Category, GroundTruth, MediaKind, MediaRef, ObservationSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFormat {
    IntentqaJsonl,
    InstitJsonl,
}

/// Description of one dataset split on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub split: Split,
    pub records_path: PathBuf,
    pub media_root: PathBuf,
    pub format: RecordFormat,
}

impl DatasetManifest {
    /// Reads a manifest JSON file; relative paths resolve against the
    /// manifest's directory.
    pub fn load_file(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| DatasetError::Manifest(e.to_string()))?;
        if let Some(dir) = path.parent() {
            if manifest.records_path.is_relative() {
                manifest.records_path = dir.join(&manifest.records_path);
            }
            if manifest.media_root.is_relative() {
                manifest.media_root = dir.join(&manifest.media_root);
            }
        }
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if !self.records_path.exists() {
            return Err(DatasetError::Manifest(format!(
                "records_path does not exist: {}",
                self.records_path.display()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("line {line}: {message}")]
    Schema { line: u64, message: String },
    #[error("media missing: {0}")]
    MediaMissing(String),
    #[error("frame manifest empty for {0}")]
    EmptyManifest(String),
}

impl DatasetError {
    pub fn line(&self) -> Option<u64> {
        match self {
            DatasetError::Schema { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// Raw JSONL record as written on disk.
#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    #[serde(default)]
    video: Option<String>,
    #[serde(default)]
    image: Option<String>,
    question: String,
    #[serde(default)]
    options: Option<Vec<String>>,
    answer: serde_json::Value,
    #[serde(default, rename = "type")]
    category: Option<String>,
}

fn convert(record: RawRecord, format: RecordFormat, line: u64) -> Result<ObservationSample, DatasetError> {
    let schema_err = |message: String| DatasetError::Schema { line, message };

    let media = match (&record.video, &record.image) {
        (Some(v), None) => MediaRef::video(v),
        (None, Some(i)) => {
            if format == RecordFormat::IntentqaJsonl {
                return Err(schema_err("intentqa records must reference a video".into()));
            }
            MediaRef::image(i)
        }
        (Some(_), Some(_)) => return Err(schema_err("record has both video and image".into())),
        (None, None) => return Err(schema_err("record has neither video nor image".into())),
    };

    let ground_truth = match &record.answer {
        serde_json::Value::Number(n) => {
            let idx = n
                .as_u64()
                .ok_or_else(|| schema_err(format!("answer index must be a non-negative integer, got {n}")))?;
            GroundTruth::Index(idx as usize)
        }
        serde_json::Value::String(s) => GroundTruth::Text(s.clone()),
        other => return Err(schema_err(format!("answer must be an index or a string, got {other}"))),
    };

    let category = match &record.category {
        Some(raw) => Category::parse(raw)
            .ok_or_else(|| schema_err(format!("unknown category {raw:?}")))?,
        None => Category::Other,
    };

    match format {
        RecordFormat::IntentqaJsonl => {
            let options = record
                .options
                .as_ref()
                .ok_or_else(|| schema_err("intentqa records must carry options".into()))?;
            if options.len() != 5 {
                return Err(schema_err(format!("intentqa records need exactly 5 options, got {}", options.len())));
            }
            if !matches!(ground_truth, GroundTruth::Index(_)) {
                return Err(schema_err("intentqa answer must be an option index".into()));
            }
            if category == Category::Other {
                return Err(schema_err("intentqa records need a CW/CH/TN/TP category".into()));
            }
        }
        RecordFormat::InstitJsonl => {
            if record.options.is_none() && matches!(ground_truth, GroundTruth::Index(_)) {
                return Err(schema_err("index answer requires options".into()));
            }
        }
    }

    let sample = ObservationSample {
        id: record.id,
        media,
        query: record.question,
        options: record.options,
        ground_truth: Some(ground_truth),
        category,
    };
    sample
        .validate()
        .map_err(|e| schema_err(e.to_string()))?;
    Ok(sample)
}

/// Streaming iterator over the records of one split, in file order.
/// Malformed lines come out as `Err` items carrying their line number;
/// iteration continues past them, so the caller chooses lenient or strict
/// behaviour.
pub struct RecordIter {
    lines: Lines<BufReader<File>>,
    format: RecordFormat,
    line: u64,
}

impl Iterator for RecordIter {
    type Item = Result<ObservationSample, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    self.line += 1;
                    return Some(Err(DatasetError::Io {
                        path: format!("line {}", self.line),
                        source: e,
                    }));
                }
            };
            self.line += 1;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Result<RawRecord, _> = serde_json::from_str(&line);
            return Some(match parsed {
                Ok(record) => convert(record, self.format, self.line),
                Err(e) => Err(DatasetError::Schema {
                    line: self.line,
                    message: format!("invalid JSON: {e}"),
                }),
            });
        }
    }
}

/// Opens the split described by the manifest and streams its samples.
pub fn load(manifest: &DatasetManifest) -> Result<RecordIter, DatasetError> {
    manifest.validate()?;
    let file = File::open(&manifest.records_path).map_err(|source| DatasetError::Io {
        path: manifest.records_path.display().to_string(),
        source,
    })?;
    Ok(RecordIter {
        lines: BufReader::new(file).lines(),
        format: manifest.format,
        line: 0,
    })
}

/// Picks `n` frames from the manifest: uniform with both endpoints when
/// enough frames exist (`floor(i*(L-1)/(n-1))`), everything when `L < n`,
/// and the middle frame when `n = 1`.
pub fn sample_frames(media: &MediaRef, n: usize) -> Result<Vec<String>, DatasetError> {
    assert!(n >= 1, "frame count must be positive");
    let frames = media
        .frame_manifest
        .as_ref()
        .filter(|f| !f.is_empty())
        .ok_or_else(|| DatasetError::EmptyManifest(media.source.clone()))?;
    let len = frames.len();
    if len <= n {
        return Ok(frames.clone());
    }
    if n == 1 {
        return Ok(vec![frames[len / 2].clone()]);
    }
    let picked = (0..n)
        .map(|i| frames[i * (len - 1) / (n - 1)].clone())
        .collect();
    Ok(picked)
}

/// Populates the frame manifest from the on-disk layout
/// `media_root/<source>/frame_*.jpg` (videos) or `media_root/<source>`
/// (single image file). Raised at access time, not load time.
pub fn resolve_frames(media_root: &Path, media: &MediaRef) -> Result<MediaRef, DatasetError> {
    if media.frame_manifest.is_some() {
        return Ok(media.clone());
    }
    if media.source.starts_with("http://") || media.source.starts_with("https://") {
        return Ok(media.clone().with_frames(vec![media.source.clone()]));
    }
    match media.kind {
        MediaKind::Image => {
            let path = media_root.join(&media.source);
            if !path.is_file() {
                return Err(DatasetError::MediaMissing(path.display().to_string()));
            }
            Ok(media.clone().with_frames(vec![path.display().to_string()]))
        }
        MediaKind::Video => {
            let dir = media_root.join(&media.source);
            let entries = std::fs::read_dir(&dir)
                .map_err(|_| DatasetError::MediaMissing(dir.display().to_string()))?;
            let mut frames: Vec<String> = entries
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| {
                    p.is_file()
                        && p.file_name()
                            .and_then(|n| n.to_str())
                            .is_some_and(|n| n.starts_with("frame_"))
                })
                .map(|p| p.display().to_string())
                .collect();
            frames.sort();
            if frames.is_empty() {
                return Err(DatasetError::MediaMissing(format!(
                    "{} contains no frame_* files",
                    dir.display()
                )));
            }
            Ok(media.clone().with_frames(frames))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_manifest(dir: &Path, format: RecordFormat, lines: &[&str]) -> DatasetManifest {
        let records = dir.join("records.jsonl");
        let mut f = File::create(&records).unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        DatasetManifest {
            name: "fixture".into(),
            split: Split::Val,
            records_path: records,
            media_root: dir.join("media"),
            format,
        }
    }

    const INTENTQA_LINE: &str = r#"{"id":"q1","video":"vid_001","question":"why does the man point","options":["to guide attention","to stretch","to wave","to push the door","to grab a cup"],"answer":0,"type":"CW"}"#;

    #[test]
    fn loads_valid_intentqa_lines_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let l2 = INTENTQA_LINE.replace("q1", "q2").replace("\"answer\":0", "\"answer\":3");
        let l3 = INTENTQA_LINE.replace("q1", "q3").replace("CW", "TP");
        let manifest =
            write_manifest(dir.path(), RecordFormat::IntentqaJsonl, &[INTENTQA_LINE, &l2, &l3]);
        let samples: Vec<_> = load(&manifest).unwrap().map(Result::unwrap).collect();
        assert_eq!(samples.len(), 3);
        assert_eq!(samples[0].id, "q1");
        assert_eq!(samples[1].id, "q2");
        assert_eq!(samples[1].ground_truth, Some(GroundTruth::Index(3)));
        assert_eq!(samples[2].category, Category::TP);
    }

    #[test]
    fn bad_answer_index_reports_line_and_iteration_continues() {
        let dir = tempfile::tempdir().unwrap();
        let bad = INTENTQA_LINE.replace("\"answer\":0", "\"answer\":7").replace("q1", "qbad");
        let manifest =
            write_manifest(dir.path(), RecordFormat::IntentqaJsonl, &[INTENTQA_LINE, &bad, INTENTQA_LINE]);
        let results: Vec<_> = load(&manifest).unwrap().collect();
        assert_eq!(results.len(), 3);
        assert!(results[0].is_ok());
        let err = results[1].as_ref().unwrap_err();
        assert_eq!(err.line(), Some(2));
        assert!(err.to_string().contains("out of range"), "{err}");
        assert!(results[2].is_ok());
    }

    #[test]
    fn intentqa_rejects_wrong_option_count_and_missing_category() {
        let dir = tempfile::tempdir().unwrap();
        let four_options = r#"{"id":"q1","video":"v","question":"q","options":["a","b","c","d"],"answer":0,"type":"CW"}"#;
        let no_category = r#"{"id":"q2","video":"v","question":"q","options":["a","b","c","d","e"],"answer":0}"#;
        let manifest = write_manifest(
            dir.path(),
            RecordFormat::IntentqaJsonl,
            &[four_options, no_category],
        );
        let results: Vec<_> = load(&manifest).unwrap().collect();
        assert!(results[0].as_ref().unwrap_err().to_string().contains("exactly 5 options"));
        assert!(results[1].as_ref().unwrap_err().to_string().contains("category"));
    }

    #[test]
    fn instit_open_ended_line_without_options() {
        let dir = tempfile::tempdir().unwrap();
        let open = r#"{"id":"i1","image":"img_01.jpg","question":"what is <1> doing","answer":"pouring water into a cup"}"#;
        let manifest = write_manifest(dir.path(), RecordFormat::InstitJsonl, &[open]);
        let samples: Vec<_> = load(&manifest).unwrap().map(Result::unwrap).collect();
        assert_eq!(samples[0].options, None);
        assert_eq!(
            samples[0].ground_truth,
            Some(GroundTruth::Text("pouring water into a cup".into()))
        );
        assert_eq!(samples[0].category, Category::Other);
        assert_eq!(samples[0].media.kind, MediaKind::Image);
    }

    #[test]
    fn instit_index_answer_requires_options() {
        let dir = tempfile::tempdir().unwrap();
        let bad = r#"{"id":"i1","image":"img.jpg","question":"q","answer":2}"#;
        let manifest = write_manifest(dir.path(), RecordFormat::InstitJsonl, &[bad]);
        let results: Vec<_> = load(&manifest).unwrap().collect();
        assert!(results[0].as_ref().unwrap_err().to_string().contains("requires options"));
    }

    #[test]
    fn invalid_json_line_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let manifest =
            write_manifest(dir.path(), RecordFormat::IntentqaJsonl, &["{not json", INTENTQA_LINE]);
        let results: Vec<_> = load(&manifest).unwrap().collect();
        assert_eq!(results[0].as_ref().unwrap_err().line(), Some(1));
        assert!(results[1].is_ok());
    }

    #[test]
    fn sample_frames_uniform_with_endpoints() {
        let frames: Vec<String> = (0..10).map(|i| format!("frame_{i:06}.jpg")).collect();
        let media = MediaRef::video("v").with_frames(frames.clone());
        let picked = sample_frames(&media, 5).unwrap();
        let expected: Vec<String> = [0usize, 2, 4, 6, 9].iter().map(|i| frames[*i].clone()).collect();
        assert_eq!(picked, expected);
    }

    #[test]
    fn sample_frames_short_and_single_cases() {
        let frames: Vec<String> = (0..3).map(|i| format!("f{i}")).collect();
        let media = MediaRef::video("v").with_frames(frames.clone());
        assert_eq!(sample_frames(&media, 8).unwrap(), frames);

        let nine: Vec<String> = (0..9).map(|i| format!("f{i}")).collect();
        let media = MediaRef::video("v").with_frames(nine);
        assert_eq!(sample_frames(&media, 1).unwrap(), vec!["f4".to_string()]);

        let empty = MediaRef::video("v");
        assert!(matches!(sample_frames(&empty, 3), Err(DatasetError::EmptyManifest(_))));
    }

    proptest! {
        #[test]
        fn sample_frames_strictly_increasing_with_endpoints(len in 1usize..40, n in 1usize..12) {
            let frames: Vec<String> = (0..len).map(|i| format!("frame_{i:06}")).collect();
            let media = MediaRef::video("v").with_frames(frames.clone());
            let picked = sample_frames(&media, n).unwrap();
            prop_assert_eq!(picked.len(), n.min(len));
            prop_assert!(picked.windows(2).all(|w| w[0] < w[1]));
            if n >= 2 && len >= 2 {
                prop_assert_eq!(&picked[0], &frames[0]);
                prop_assert_eq!(picked.last().unwrap(), frames.last().unwrap());
            }
        }

        #[test]
        fn loading_halves_concatenated_equals_whole(count in 1usize..12, cut in 0usize..12) {
            let cut = cut.min(count);
            let lines: Vec<String> = (0..count)
                .map(|i| INTENTQA_LINE.replace("q1", &format!("q{i}")))
                .collect();
            let refs: Vec<&str> = lines.iter().map(String::as_str).collect();

            let whole_dir = tempfile::tempdir().unwrap();
            let whole = write_manifest(whole_dir.path(), RecordFormat::IntentqaJsonl, &refs);
            let all: Vec<_> = load(&whole).unwrap().map(Result::unwrap).collect();

            let first_dir = tempfile::tempdir().unwrap();
            let first = write_manifest(first_dir.path(), RecordFormat::IntentqaJsonl, &refs[..cut]);
            let second_dir = tempfile::tempdir().unwrap();
            let second = write_manifest(second_dir.path(), RecordFormat::IntentqaJsonl, &refs[cut..]);
            let mut halves: Vec<_> = load(&first).unwrap().map(Result::unwrap).collect();
            halves.extend(load(&second).unwrap().map(Result::unwrap));

            prop_assert_eq!(all, halves);
        }
    }

    #[test]
    fn resolve_frames_lists_sorted_frame_files() {
        let dir = tempfile::tempdir().unwrap();
        let vid_dir = dir.path().join("vid_001");
        std::fs::create_dir_all(&vid_dir).unwrap();
        for i in [3, 1, 2] {
            std::fs::write(vid_dir.join(format!("frame_{i:06}.jpg")), b"jpg").unwrap();
        }
        std::fs::write(vid_dir.join("notes.txt"), b"skip me").unwrap();

        let media = MediaRef::video("vid_001");
        let resolved = resolve_frames(dir.path(), &media).unwrap();
        let frames = resolved.frame_manifest.unwrap();
        assert_eq!(frames.len(), 3);
        assert!(frames[0].ends_with("frame_000001.jpg"));
        assert!(frames[2].ends_with("frame_000003.jpg"));
    }

    #[test]
    fn resolve_frames_missing_media_errors() {
        let dir = tempfile::tempdir().unwrap();
        let media = MediaRef::video("vid_none");
        assert!(matches!(
            resolve_frames(dir.path(), &media),
            Err(DatasetError::MediaMissing(_))
        ));
    }

    #[test]
    fn manifest_file_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("records.jsonl"), format!("{INTENTQA_LINE}\n")).unwrap();
        let manifest_path = dir.path().join("manifest.json");
        std::fs::write(
            &manifest_path,
            r#"{"name":"fix","split":"val","records_path":"records.jsonl","media_root":"media","format":"intentqa_jsonl"}"#,
        )
        .unwrap();
        let manifest = DatasetManifest::load_file(&manifest_path).unwrap();
        assert!(manifest.records_path.is_absolute() || manifest.records_path.starts_with(dir.path()));
        assert!(manifest.validate().is_ok());
        let samples: Vec<_> = load(&manifest).unwrap().map(Result::unwrap).collect();
        assert_eq!(samples.len(), 1);
    }
}
