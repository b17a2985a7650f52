//! The content-addressed response cache: identical logical requests are
//! served from disk, changed decoding parameters miss, corrupt entries
//! recover as misses.
//!
//! ```bash
//! cargo run -p intentbench --example response_cache
//! ```

use std::collections::BTreeMap;

use intentbench::backend::mock::mock_script;
use intentbench::backend::{BackendRequest, ChatMessage, MessagePart};
use intentbench::runner::cache::ResponseCache;

fn request(text: &str) -> BackendRequest {
    BackendRequest::new("mock", vec![ChatMessage::user(vec![MessagePart::Text(text.into())])])
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ResponseCache::open(dir.path(), false).unwrap();
    let backend = mock_script(BTreeMap::from([("q1".to_string(), "A".to_string())]));

    let req = request("sample q1, what is happening?");
    cache.get_or_call(&backend, &req).unwrap();
    cache.get_or_call(&backend, &req).unwrap();
    println!(
        "same request twice: hits={} misses={} backend_calls={}",
        cache.hits(),
        cache.misses(),
        backend.calls()
    );

    // a different temperature is a different key
    let mut warmer = req.clone();
    warmer.decoding.temperature = 0.7;
    cache.get_or_call(&backend, &warmer).unwrap();
    println!(
        "changed temperature:  hits={} misses={} backend_calls={}",
        cache.hits(),
        cache.misses(),
        backend.calls()
    );

    // entries are plain JSON files under a two-level fan-out
    let mut entries = Vec::new();
    for entry in walk(dir.path()) {
        entries.push(entry);
    }
    println!("cache files on disk: {}", entries.len());
    for path in &entries {
        println!("  {}", path.strip_prefix(dir.path()).unwrap().display());
    }
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    if let Ok(read) = std::fs::read_dir(dir) {
        for entry in read.flatten() {
            let path = entry.path();
            if path.is_dir() {
                out.extend(walk(&path));
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    out
}
