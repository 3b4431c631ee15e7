//! ROUGE-N and ROUGE-L over token sequences.
//!
//! The token-level functions compare tokens exactly. The text-level helpers
//! lowercase and split on whitespace first; no stemming is applied.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::numeric::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: Real,
    pub recall: Real,
    pub f1: Real,
}

impl RougeScore {
    pub fn new(precision: Real, recall: Real) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore { precision, recall, f1 }
    }

    fn from_counts(matches: usize, candidate_total: usize, reference_total: usize) -> Self {
        if candidate_total == 0 || reference_total == 0 {
            return RougeScore::default();
        }
        RougeScore::new(
            matches as Real / candidate_total as Real,
            matches as Real / reference_total as Real,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RougeVariant {
    N(usize),
    L,
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram overlap.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> RougeScore {
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let matches: usize = cand
        .iter()
        .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    RougeScore::from_counts(matches, cand.values().sum(), refc.values().sum())
}

/// Length of the longest common subsequence, by dynamic programming with two rows.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> RougeScore {
    let l = lcs_len(candidate, reference);
    RougeScore::from_counts(l, candidate.len(), reference.len())
}

pub fn rouge<T: Eq + Hash>(candidate: &[T], reference: &[T], variant: RougeVariant) -> RougeScore {
    match variant {
        RougeVariant::N(n) => rouge_n(candidate, reference, n),
        RougeVariant::L => rouge_l(candidate, reference),
    }
}

/// Lowercased whitespace tokens.
pub fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

pub fn rouge_text(candidate: &str, reference: &str, variant: RougeVariant) -> RougeScore {
    rouge(&normalize(candidate), &normalize(reference), variant)
}

/// Keeps the whole tokens that fit in the first `byte_limit` bytes; a token cut by
/// the limit is dropped.
pub fn truncate_to_bytes(text: &str, byte_limit: usize) -> &str {
    if text.len() <= byte_limit {
        return text;
    }
    let mut cut = byte_limit;
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    let head = &text[..cut];
    let next_is_space = text[cut..].chars().next().is_some_and(char::is_whitespace);
    if next_is_space {
        return head;
    }
    // drop the partial final token
    match head.rfind(char::is_whitespace) {
        Some(pos) => &head[..pos],
        None => "",
    }
}

/// Recall after truncating the candidate to `byte_limit` bytes.
pub fn rouge_recall_truncated(candidate: &str, reference: &str, byte_limit: usize, variant: RougeVariant) -> Real {
    rouge_text(truncate_to_bytes(candidate, byte_limit), reference, variant).recall
}
