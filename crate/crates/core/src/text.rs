//! Character-level edit distance, normalized edit distance and exact match.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_seq(&a, &b)
}

/// Levenshtein distance over arbitrary comparable items.
pub fn levenshtein_seq<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized edit distance; lower is better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NedScore {
    pub distance: usize,
    pub len_pred: usize,
    pub len_gt: usize,
    pub value: f64,
}

/// Levenshtein divided by the longer length. Both empty gives 0.0.
pub fn ned(pred: &str, gt: &str) -> NedScore {
    let p: Vec<char> = pred.chars().collect();
    let g: Vec<char> = gt.chars().collect();
    let distance = levenshtein_seq(&p, &g);
    let denom = p.len().max(g.len());
    let value = if denom == 0 { 0.0 } else { distance as f64 / denom as f64 };
    NedScore { distance, len_pred: p.len(), len_gt: g.len(), value }
}

/// NFC plus trimming of surrounding whitespace. Interior whitespace is kept.
pub fn normalize_for_match(s: &str) -> String {
    s.nfc().collect::<String>().trim().to_string()
}

/// 1.0 when the normalized strings are identical, else 0.0.
pub fn exact_match(pred: &str, gt: &str) -> f64 {
    if normalize_for_match(pred) == normalize_for_match(gt) {
        1.0
    } else {
        0.0
    }
}
