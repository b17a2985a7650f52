//! Stage 1: propose candidate goals for an observed scene.
//!
//! The raw model reply is parsed as a lettered/numbered/bulleted list,
//! deduplicated under normalization, and capped at the configured top-K in
//! emission order (the model's own ranking).
//!
//! ```bash
//! cargo run -p intentbench --example propose_candidates
//! ```

use std::collections::BTreeMap;

use intentbench::backend::mock::mock_script;
use intentbench::proposer::{parse_candidates, propose, ProposerTemplates};
use intentbench::types::{Category, MediaRef, ObservationSample, RunConfig, RunMode};

fn main() {
    // a kitchen scene: the reply proposes five goals, one duplicated
    let reply = "A. Make coffee\n\
                 B. Heat water for tea\n\
                 C. make  coffee.\n\
                 D. Wash the dishes\n\
                 E. Find a clean cup";
    println!("raw model reply:\n{reply}\n");
    println!("parsed items: {:?}\n", parse_candidates(reply, 5));

    let sample = ObservationSample {
        id: "kitchen_01".into(),
        media: MediaRef::video("vid_kitchen_01"),
        query: "What is the person at the counter trying to achieve?".into(),
        options: None,
        ground_truth: None,
        category: Category::CW,
    };
    let cfg = RunConfig::new(RunMode::OpenTwoStep);
    let backend = mock_script(BTreeMap::from([(
        "person at the counter".to_string(),
        reply.to_string(),
    )]));
    let templates = ProposerTemplates::load(&cfg).unwrap();

    let candidates = propose(&sample, &cfg, &backend, &templates).unwrap();
    println!("candidate set (origin {:?}):", candidates.origin);
    for (i, c) in candidates.candidates.iter().enumerate() {
        println!("  {}. {c}", i + 1);
    }
    // the duplicate "make  coffee." collapsed into the first occurrence
    assert_eq!(candidates.candidates.len(), 4);
}
