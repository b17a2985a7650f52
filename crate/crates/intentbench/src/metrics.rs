//! Text-generation and classification metrics: accuracy, ROUGE-1, ROUGE-L,
//! embedding cosine similarity, and BERTScore-F1 with greedy token matching.
//!
//! Everything here is a pure function over value types. Tokenization is the
//! crate-wide canonical form ([`normalize_text`] then alphanumeric-boundary
//! splitting), so pipeline dedup and metric counting can never drift apart.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backend::EmbeddingVector;
use crate::types::normalize_text;

/// A tokenized text, produced by the canonical tokenizer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
}

impl TokenSeq {
    /// Canonical tokenization: normalize, then split on whitespace and
    /// non-alphanumeric boundaries, discarding empty pieces.
    pub fn tokenize(text: &str) -> Self {
        let norm = normalize_text(text);
        let tokens = norm
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        TokenSeq { tokens }
    }

    /// Wraps pre-tokenized input. The caller vouches the tokens are already
    /// in canonical form.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        TokenSeq { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.tokens
    }
}

/// Named precision/recall/F1 triple. `f1 = 2PR/(P+R)`, zero when `P+R = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    pub f1: f64,
}

impl MetricScore {
    pub fn from_pr(name: impl Into<String>, precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        MetricScore {
            name: name.into(),
            precision: Some(precision),
            recall: Some(recall),
            f1,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Proportion of positions where prediction equals gold.
pub fn accuracy(preds: &[usize], golds: &[usize]) -> Result<f64, MetricsError> {
    if preds.len() != golds.len() {
        return Err(MetricsError::LengthMismatch(preds.len(), golds.len()));
    }
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let matches = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(matches as f64 / preds.len() as f64)
}

/// Unigram overlap: clipped multiset intersection between candidate and
/// reference token counts.
pub fn rouge1(candidate: &TokenSeq, reference: &TokenSeq) -> MetricScore {
    if candidate.is_empty() || reference.is_empty() {
        return MetricScore::from_pr("rouge1", 0.0, 0.0);
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for token in &reference.tokens {
        *ref_counts.entry(token.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for token in &candidate.tokens {
        if let Some(count) = ref_counts.get_mut(token.as_str()) {
            if *count > 0 {
                *count -= 1;
                overlap += 1;
            }
        }
    }
    let precision = overlap as f64 / candidate.len() as f64;
    let recall = overlap as f64 / reference.len() as f64;
    MetricScore::from_pr("rouge1", precision, recall)
}

/// Longest-common-subsequence length, single-row dynamic program in
/// `O(|a|·|b|)` time and `O(|b|)` space.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; b.len() + 1];
    for item_a in a {
        let mut diag = 0;
        for (j, item_b) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if item_a == item_b {
                diag + 1
            } else {
                up.max(row[j])
            };
            diag = up;
        }
    }
    row[b.len()]
}

/// Longest-common-subsequence similarity.
pub fn rouge_l(candidate: &TokenSeq, reference: &TokenSeq) -> MetricScore {
    if candidate.is_empty() || reference.is_empty() {
        return MetricScore::from_pr("rougeL", 0.0, 0.0);
    }
    let lcs = lcs_length(&candidate.tokens, &reference.tokens) as f64;
    let precision = lcs / candidate.len() as f64;
    let recall = lcs / reference.len() as f64;
    MetricScore::from_pr("rougeL", precision, recall)
}

/// Cosine similarity plus a flag marking the degenerate zero-vector case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineSim {
    pub value: f64,
    /// True when either input had zero norm; `value` is defined as 0 then.
    pub zero_vector: bool,
}

/// Cosine similarity between two equal-dimension vectors, clamped to
/// `[-1, 1]`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<CosineSim, MetricsError> {
    cosine_slices(&a.values, &b.values)
}

pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<CosineSim, MetricsError> {
    if a.is_empty() || b.is_empty() || a.len() != b.len() {
        return Err(MetricsError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm_a: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        log::warn!("cosine over zero vector, defining similarity as 0");
        return Ok(CosineSim { value: 0.0, zero_vector: true });
    }
    Ok(CosineSim {
        value: (dot / (norm_a * norm_b)).clamp(-1.0, 1.0),
        zero_vector: false,
    })
}

/// BERTScore-F1 with greedy matching: recall is the mean over reference
/// tokens of the best cosine against candidate tokens, precision the mean
/// over candidate tokens of the best cosine against reference tokens.
/// No IDF weighting, no baseline rescaling.
pub fn bertscore_f1(
    cand_tokens: &[EmbeddingVector],
    ref_tokens: &[EmbeddingVector],
) -> Result<MetricScore, MetricsError> {
    if cand_tokens.is_empty() || ref_tokens.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let dim = cand_tokens[0].dim();
    for v in cand_tokens.iter().chain(ref_tokens) {
        if v.dim() != dim {
            return Err(MetricsError::DimensionMismatch(dim, v.dim()));
        }
    }
    let best_against = |token: &EmbeddingVector, pool: &[EmbeddingVector]| -> Result<f64, MetricsError> {
        let mut best = f64::NEG_INFINITY;
        for other in pool {
            let c = cosine(token, other)?.value;
            if c > best {
                best = c;
            }
        }
        Ok(best)
    };
    let mut recall = 0.0;
    for token in ref_tokens {
        recall += best_against(token, cand_tokens)?;
    }
    recall /= ref_tokens.len() as f64;
    let mut precision = 0.0;
    for token in cand_tokens {
        precision += best_against(token, ref_tokens)?;
    }
    precision /= cand_tokens.len() as f64;
    Ok(MetricScore::from_pr("bertscore_f1", precision, recall))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(tokens: &[&str]) -> TokenSeq {
        TokenSeq::from_tokens(tokens.iter().map(|t| t.to_string()).collect())
    }

    fn vector(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec(), "test")
    }

    /// Brute-force LCS: enumerate every subsequence of `a` and keep the
    /// longest that is also a subsequence of `b`. Exponential on purpose.
    fn lcs_brute_force(a: &[String], b: &[String]) -> usize {
        let mut best = 0;
        for mask in 0u32..(1 << a.len()) {
            let picked: Vec<&String> =
                a.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, t)| t).collect();
            if picked.len() <= best {
                continue;
            }
            let mut it = b.iter();
            if picked.iter().all(|p| it.any(|t| t == *p)) {
                best = picked.len();
            }
        }
        best
    }

    #[test]
    fn tokenize_uses_canonical_normalization() {
        assert_eq!(TokenSeq::tokenize("  Make  Coffee. ").tokens, vec!["make", "coffee"]);
        assert_eq!(TokenSeq::tokenize("don't-stop now2!").tokens, vec!["don", "t", "stop", "now2"]);
        assert!(TokenSeq::tokenize("  ?! ").is_empty());
    }

    #[test]
    fn accuracy_counts_matches() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0, 0, 0], &[0, 1, 2, 3]).unwrap(), 0.25);
        assert_eq!(accuracy(&[], &[]), Err(MetricsError::EmptyInput));
        assert_eq!(accuracy(&[0], &[0, 1]), Err(MetricsError::LengthMismatch(1, 2)));
    }

    #[test]
    fn rouge1_matches_hand_counts() {
        let identical = rouge1(&seq(&["a", "b"]), &seq(&["a", "b"]));
        assert_eq!((identical.precision.unwrap(), identical.recall.unwrap(), identical.f1), (1.0, 1.0, 1.0));

        // overlap = |{the, cat}| = 2 of 3 tokens each side
        let partial = rouge1(&seq(&["the", "cat", "sat"]), &seq(&["the", "cat", "ran"]));
        assert!((partial.precision.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((partial.recall.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((partial.f1 - 2.0 / 3.0).abs() < 1e-12);

        let empty = rouge1(&seq(&[]), &seq(&["x"]));
        assert_eq!((empty.precision.unwrap(), empty.recall.unwrap(), empty.f1), (0.0, 0.0, 0.0));

        // clipped counts: "a a" vs "a" overlaps once, not twice
        let clipped = rouge1(&seq(&["a", "a"]), &seq(&["a"]));
        assert!((clipped.precision.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(clipped.recall.unwrap(), 1.0);
    }

    #[test]
    fn rouge_l_matches_spec_example_and_oracle() {
        let identical = rouge_l(&seq(&["a", "b", "c"]), &seq(&["a", "b", "c"]));
        assert_eq!(identical.f1, 1.0);

        // LCS("abcd", "acbd") = 3 via "abd" or "acd"
        let cand = seq(&["a", "b", "c", "d"]);
        let reference = seq(&["a", "c", "b", "d"]);
        assert_eq!(lcs_brute_force(&cand.tokens, &reference.tokens), 3);
        let score = rouge_l(&cand, &reference);
        assert_eq!(score.precision.unwrap(), 0.75);
        assert_eq!(score.recall.unwrap(), 0.75);

        let disjoint = rouge_l(&seq(&["x", "y"]), &seq(&["p", "q"]));
        assert_eq!((disjoint.precision.unwrap(), disjoint.recall.unwrap(), disjoint.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn cosine_matches_exact_arithmetic() {
        let same = cosine(&vector(&[1.0, 2.0, 3.0]), &vector(&[1.0, 2.0, 3.0])).unwrap();
        assert!(!same.zero_vector);
        assert!((same.value - 1.0).abs() < 1e-12);

        let ortho = cosine(&vector(&[1.0, 0.0]), &vector(&[0.0, 1.0])).unwrap();
        assert_eq!(ortho.value, 0.0);

        // 32 / (sqrt(14) * sqrt(77)) = 32 / sqrt(1078)
        let mixed = cosine(&vector(&[1.0, 2.0, 3.0]), &vector(&[4.0, 5.0, 6.0])).unwrap();
        assert!((mixed.value - 32.0 / 1078f64.sqrt()).abs() < 1e-15);
        assert!((mixed.value - 0.9746318461970762).abs() < 1e-12);

        let zero = cosine(&vector(&[0.0, 0.0]), &vector(&[1.0, 1.0])).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(zero.zero_vector);

        assert_eq!(
            cosine(&vector(&[1.0]), &vector(&[1.0, 2.0])),
            Err(MetricsError::DimensionMismatch(1, 2))
        );
    }

    #[test]
    fn bertscore_identical_lists_score_one() {
        let tokens = vec![vector(&[1.0, 0.0, 0.5]), vector(&[0.2, 0.9, 0.1])];
        let score = bertscore_f1(&tokens, &tokens).unwrap();
        assert!((score.f1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bertscore_single_tokens_reduce_to_cosine() {
        let a = vector(&[1.0, 2.0, 3.0]);
        let b = vector(&[4.0, 5.0, 6.0]);
        let score = bertscore_f1(std::slice::from_ref(&a), std::slice::from_ref(&b)).unwrap();
        let expected = cosine(&a, &b).unwrap().value;
        assert!((score.f1 - expected).abs() < 1e-12);
        assert!((score.precision.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn bertscore_matches_pairwise_max_oracle() {
        let cands = vec![vector(&[1.0, 0.0, 0.0]), vector(&[0.0, 1.0, 0.0])];
        let refs = vec![
            vector(&[0.6, 0.8, 0.0]),
            vector(&[0.0, 0.0, 1.0]),
            vector(&[1.0, 1.0, 1.0]),
        ];
        // brute force: full pairwise cosine matrix, row/column maxima
        let mut matrix = vec![vec![0.0; refs.len()]; cands.len()];
        for (i, c) in cands.iter().enumerate() {
            for (j, r) in refs.iter().enumerate() {
                matrix[i][j] = cosine(c, r).unwrap().value;
            }
        }
        let precision: f64 = matrix
            .iter()
            .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / cands.len() as f64;
        let recall: f64 = (0..refs.len())
            .map(|j| (0..cands.len()).map(|i| matrix[i][j]).fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / refs.len() as f64;
        let expected_f1 = 2.0 * precision * recall / (precision + recall);

        let score = bertscore_f1(&cands, &refs).unwrap();
        assert!((score.precision.unwrap() - precision).abs() < 1e-12);
        assert!((score.recall.unwrap() - recall).abs() < 1e-12);
        assert!((score.f1 - expected_f1).abs() < 1e-12);
    }

    #[test]
    fn bertscore_rejects_bad_input() {
        assert_eq!(bertscore_f1(&[], &[vector(&[1.0])]), Err(MetricsError::EmptyInput));
        assert_eq!(
            bertscore_f1(&[vector(&[1.0])], &[vector(&[1.0, 2.0])]),
            Err(MetricsError::DimensionMismatch(1, 2))
        );
    }

    proptest! {
        #[test]
        fn rouge_scores_stay_in_range_and_swap_symmetrically(
            a in proptest::collection::vec("[abc]", 0..8),
            b in proptest::collection::vec("[abc]", 0..8),
        ) {
            let sa = TokenSeq::from_tokens(a);
            let sb = TokenSeq::from_tokens(b);
            for (fwd, bwd) in [(rouge1(&sa, &sb), rouge1(&sb, &sa)), (rouge_l(&sa, &sb), rouge_l(&sb, &sa))] {
                prop_assert!((0.0..=1.0).contains(&fwd.f1));
                // swapping inputs swaps P and R, leaving F1 unchanged
                prop_assert!((fwd.f1 - bwd.f1).abs() < 1e-12);
                prop_assert!((fwd.precision.unwrap() - bwd.recall.unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn lcs_dp_matches_brute_force(
            a in proptest::collection::vec("[abc]", 0..8),
            b in proptest::collection::vec("[abc]", 0..8),
        ) {
            let dp = lcs_length(&a, &b);
            prop_assert_eq!(dp, lcs_brute_force(&a, &b));
            prop_assert!(dp <= a.len().min(b.len()));
        }

        #[test]
        fn rouge1_f1_is_one_iff_equal_multisets(
            a in proptest::collection::vec("[ab]", 1..6),
            b in proptest::collection::vec("[ab]", 1..6),
        ) {
            let sa = TokenSeq::from_tokens(a.clone());
            let sb = TokenSeq::from_tokens(b.clone());
            let f1 = rouge1(&sa, &sb).f1;
            let mut ma = a; ma.sort();
            let mut mb = b; mb.sort();
            prop_assert_eq!((f1 - 1.0).abs() < 1e-12, ma == mb);
        }

        #[test]
        fn rouge1_invariant_under_doubling(
            a in proptest::collection::vec("[abc]", 1..6),
            b in proptest::collection::vec("[abc]", 1..6),
        ) {
            let doubled = |v: &Vec<String>| {
                let mut out = Vec::with_capacity(v.len() * 2);
                for t in v {
                    out.push(t.clone());
                    out.push(t.clone());
                }
                out
            };
            let base = rouge1(&TokenSeq::from_tokens(a.clone()), &TokenSeq::from_tokens(b.clone()));
            let dup = rouge1(
                &TokenSeq::from_tokens(doubled(&a)),
                &TokenSeq::from_tokens(doubled(&b)),
            );
            prop_assert!((base.f1 - dup.f1).abs() < 1e-12);
        }

        #[test]
        fn cosine_stays_in_range(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..6),
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let sim = cosine_slices(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&sim.value));
        }
    }

    #[test]
    fn bertscore_invariant_under_orthogonal_map() {
        // Householder reflection H = I - 2vv^T/|v|^2 preserves inner products.
        let v = [0.3, -1.2, 0.7, 0.4];
        let norm2: f64 = v.iter().map(|x| x * x).sum();
        let reflect = |x: &[f64]| -> Vec<f64> {
            let dot: f64 = x.iter().zip(&v).map(|(a, b)| a * b).sum();
            x.iter().zip(&v).map(|(a, b)| a - 2.0 * dot * b / norm2).collect()
        };
        let cands = vec![vector(&[1.0, 0.2, -0.5, 0.8]), vector(&[0.0, 1.0, 0.3, -0.2])];
        let refs = vec![vector(&[0.5, 0.5, 0.5, 0.5]), vector(&[-0.1, 0.9, 0.0, 0.4])];
        let base = bertscore_f1(&cands, &refs).unwrap();
        let map = |vs: &[EmbeddingVector]| -> Vec<EmbeddingVector> {
            vs.iter().map(|e| EmbeddingVector::new(reflect(&e.values), "test")).collect()
        };
        let rotated = bertscore_f1(&map(&cands), &map(&refs)).unwrap();
        assert!((base.f1 - rotated.f1).abs() < 1e-9);
    }
}
