//! Stage 2 in likelihood mode: score each candidate's answer-letter
//! continuation and take the argmax, ties resolving to the lowest index.
//!
//! ```bash
//! cargo run -p intentbench --example likelihood_scoring
//! ```

use std::collections::BTreeMap;

use intentbench::backend::mock::mock_script;
use intentbench::selector::{select, SelectorTemplates};
use intentbench::types::{
    CandidateOrigin, CandidateSet, Category, MediaRef, ObservationSample, RunConfig, RunMode,
    SelectionMode,
};

fn main() {
    let candidates = CandidateSet {
        candidates: vec!["make coffee".into(), "heat water for tea".into(), "wash dishes".into()],
        origin: CandidateOrigin::Stage1Generated,
        raw_model_output: None,
    };
    let sample = ObservationSample {
        id: "kitchen_01".into(),
        media: MediaRef::video("vid_kitchen_01"),
        query: "What is the person trying to achieve?".into(),
        options: None,
        ground_truth: None,
        category: Category::CW,
    };
    let mut cfg = RunConfig::new(RunMode::OpenTwoStep);
    cfg.selection_mode = SelectionMode::Likelihood;

    // scripted per-candidate logprobs; scoring follows the candidate text,
    // not its position
    let backend = mock_script(BTreeMap::new()).with_choice_logprobs(BTreeMap::from([
        ("make coffee".to_string(), -2.3),
        ("heat water for tea".to_string(), -0.1),
        ("wash dishes".to_string(), -5.0),
    ]));
    let templates = SelectorTemplates::load(&cfg).unwrap();

    let prediction = select(&sample, &candidates, &cfg, &backend, &templates).unwrap();
    println!("scores: {:?}", prediction.scores.as_ref().unwrap());
    println!(
        "argmax: index {} -> {:?}",
        prediction.selected_index, prediction.selected_text
    );
    assert_eq!(prediction.selected_index, 1);

    // all-equal scores fall back to the lowest index
    let tied = mock_script(BTreeMap::new())
        .with_letter_logprobs(BTreeMap::from([('A', -1.0), ('B', -1.0), ('C', -1.0)]));
    let prediction = select(&sample, &candidates, &cfg, &tied, &templates).unwrap();
    println!("tied scores pick index {}", prediction.selected_index);
    assert_eq!(prediction.selected_index, 0);
}
