//! The open-vocabulary metric suite on toy data: ROUGE-1, ROUGE-L,
//! embedding cosine similarity and BERTScore-F1 with greedy matching.
//!
//! ```bash
//! cargo run -p intentbench --example text_metrics
//! ```

use intentbench::backend::mock::MockEmbedder;
use intentbench::backend::EmbeddingBackend;
use intentbench::metrics::{accuracy, bertscore_f1, cosine, rouge1, rouge_l, TokenSeq};

fn main() {
    let prediction = "heat some water for the tea";
    let reference = "heat water for tea";
    let cand = TokenSeq::tokenize(prediction);
    let gold = TokenSeq::tokenize(reference);

    let r1 = rouge1(&cand, &gold);
    let rl = rouge_l(&cand, &gold);
    println!("prediction: {prediction:?}");
    println!("reference:  {reference:?}");
    println!(
        "ROUGE-1  P={:.4} R={:.4} F1={:.4}",
        r1.precision.unwrap(),
        r1.recall.unwrap(),
        r1.f1
    );
    println!(
        "ROUGE-L  P={:.4} R={:.4} F1={:.4}",
        rl.precision.unwrap(),
        rl.recall.unwrap(),
        rl.f1
    );

    // sentence-level cosine over the deterministic embedder
    let embedder = MockEmbedder::new(32, 7);
    let sentences = embedder.embed(&[prediction.to_string(), reference.to_string()]).unwrap();
    println!("CosSim   {:.4}", cosine(&sentences[0], &sentences[1]).unwrap().value);

    // BERTScore over per-token embeddings, greedy max matching
    let cand_vectors = embedder.embed(cand.as_slice()).unwrap();
    let gold_vectors = embedder.embed(gold.as_slice()).unwrap();
    let bert = bertscore_f1(&cand_vectors, &gold_vectors).unwrap();
    println!("BERTScore-F1 {:.4}", bert.f1);

    // classification accuracy is plain index matching
    let acc = accuracy(&[0, 1, 2, 2], &[0, 1, 2, 3]).unwrap();
    println!("accuracy [0,1,2,2] vs [0,1,2,3] = {acc}");
}
