//! The deterministic scripted backend used throughout tests and offline
//! runs: fixtures answer by longest-key-match against the rendered prompt.
//!
//! ```bash
//! cargo run -p intentbench --example mock_backend_basics
//! ```

use std::collections::BTreeMap;

use intentbench::backend::mock::{mock_script, MockEmbedder};
use intentbench::backend::{BackendRequest, ChatBackend, ChatMessage, EmbeddingBackend, MessagePart};
use intentbench::metrics::cosine;

fn user_request(text: &str) -> BackendRequest {
    BackendRequest::new("mock", vec![ChatMessage::user(vec![MessagePart::Text(text.into())])])
}

fn main() {
    let backend = mock_script(BTreeMap::from([
        ("q1".to_string(), "A".to_string()),
        ("q1 but harder".to_string(), "B".to_string()),
    ]))
    .with_default("E");

    // longest matching key wins
    for prompt in ["tell me about q1", "this is q1 but harder, think", "unscripted"] {
        let reply = backend.complete(&user_request(prompt)).unwrap();
        println!("{prompt:?} -> {:?}", reply.text);
    }

    // identical requests, identical responses
    let req = user_request("tell me about q1");
    assert_eq!(backend.complete(&req).unwrap().text, backend.complete(&req).unwrap().text);
    println!("deterministic across repeats ({} calls so far)", backend.calls());

    // the embedder hashes normalized text into fixed-dimension vectors
    let embedder = MockEmbedder::new(32, 7);
    let vectors = embedder
        .embed(&["make coffee".into(), "Make  Coffee.".into(), "wash dishes".into()])
        .unwrap();
    let same = cosine(&vectors[0], &vectors[1]).unwrap().value;
    let different = cosine(&vectors[0], &vectors[2]).unwrap().value;
    println!("cosine(\"make coffee\", \"Make  Coffee.\") = {same:.6}");
    println!("cosine(\"make coffee\", \"wash dishes\")  = {different:.6}");
    assert!((same - 1.0).abs() < 1e-12);
}
