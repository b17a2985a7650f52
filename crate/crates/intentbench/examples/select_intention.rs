//! Stage 2: pick the most plausible candidate in generative-label mode.
//!
//! The candidates are rendered as a lettered multiple-choice block; the
//! model's reply is resolved back to an index by answer letter, exact text,
//! normalized text, or unique containment — in that order.
//!
//! ```bash
//! cargo run -p intentbench --example select_intention
//! ```

use std::collections::BTreeMap;

use intentbench::backend::mock::mock_script;
use intentbench::selector::{options_block, parse_selection, select, SelectorTemplates};
use intentbench::types::{
    CandidateOrigin, CandidateSet, Category, MediaRef, ObservationSample, RunConfig, RunMode,
};

fn main() {
    let candidates = CandidateSet {
        candidates: vec![
            "Make coffee".into(),
            "Heat water for tea".into(),
            "Wash the dishes".into(),
            "Find a clean cup".into(),
        ],
        origin: CandidateOrigin::Stage1Generated,
        raw_model_output: None,
    };
    println!("options block:\n{}\n", options_block(&candidates));

    // the parser tolerates several reply shapes
    for reply in ["B", "B. Heat water for tea", "heat  water for TEA!", "I think they want to heat water for tea."] {
        let index = parse_selection(reply, &candidates).unwrap();
        println!("{reply:?} -> index {index}");
    }

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
        "B".to_string(),
    )]));
    let templates = SelectorTemplates::load(&cfg).unwrap();
    let prediction = select(&sample, &candidates, &cfg, &backend, &templates).unwrap();
    println!(
        "\nselected: index {} -> {:?} (mode {:?})",
        prediction.selected_index, prediction.selected_text, prediction.mode
    );
}
