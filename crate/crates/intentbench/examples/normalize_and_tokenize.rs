//! Canonical text normalization and tokenization.
//!
//! One normal form is shared by candidate dedup, answer matching and metric
//! tokenization, so the pipeline and the metrics can never disagree about
//! whether two texts are "the same".
//!
//! ```bash
//! cargo run -p intentbench --example normalize_and_tokenize
//! ```

use intentbench::metrics::TokenSeq;
use intentbench::types::normalize_text;

fn main() {
    let inputs = [
        "  Make  Coffee. ",
        "HEAT\tWATER for tea!!",
        "The person wants to wash the dishes?",
        "make coffee",
    ];
    for input in inputs {
        let norm = normalize_text(input);
        let tokens = TokenSeq::tokenize(input);
        println!("{input:?}");
        println!("  normalized: {norm:?}");
        println!("  tokens:     {:?}", tokens.tokens);
    }

    // normalization is idempotent: a second pass changes nothing
    let once = normalize_text("  So   MANY  spaces?! ");
    assert_eq!(normalize_text(&once), once);
    println!("\nidempotent: normalize(normalize(s)) == normalize(s)");
}
