//! N-gram overlap metrics: sentence BLEU-4 and recall-oriented ROUGE.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Floor applied to zero n-gram precisions before the geometric mean.
pub const BLEU_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RougeMode {
    #[default]
    Recall,
    F1,
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        let key: Vec<&str> = window.iter().map(AsRef::as_ref).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

/// Number of candidate n-grams also in the reference, clipped by reference counts.
fn clipped_matches<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> usize {
    let reference = ngram_counts(reference, n);
    ngram_counts(candidate, n)
        .iter()
        .map(|(gram, &c)| c.min(reference.get(gram).copied().unwrap_or(0)))
        .sum()
}

fn ngram_total(len: usize, n: usize) -> usize {
    (len + 1).saturating_sub(n)
}

/// Sentence-level BLEU with uniform weights over n = 1..=4, clipped
/// precisions floored at [`BLEU_EPSILON`], and the standard brevity penalty.
pub fn bleu4<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let total = ngram_total(candidate.len(), n);
        let p = if total == 0 {
            0.0
        } else {
            clipped_matches(candidate, reference, n) as f64 / total as f64
        };
        log_sum += p.max(BLEU_EPSILON).ln();
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    (brevity * (log_sum / 4.0).exp()).clamp(0.0, 1.0)
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// ROUGE-n recall: clipped matching n-grams over reference n-grams.
pub fn rouge_n<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> f64 {
    rouge_n_with(candidate, reference, n, RougeMode::Recall)
}

pub fn rouge_n_with<T: AsRef<str>>(
    candidate: &[T],
    reference: &[T],
    n: usize,
    mode: RougeMode,
) -> f64 {
    assert!(n >= 1, "rouge order must be at least 1");
    let ref_total = ngram_total(reference.len(), n);
    if ref_total == 0 {
        return 0.0;
    }
    let matches = clipped_matches(candidate, reference, n) as f64;
    let recall = matches / ref_total as f64;
    match mode {
        RougeMode::Recall => recall,
        RougeMode::F1 => {
            let cand_total = ngram_total(candidate.len(), n);
            let precision = if cand_total == 0 {
                0.0
            } else {
                matches / cand_total as f64
            };
            f1(precision, recall)
        }
    }
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x.as_ref() == y.as_ref() {
                diag + 1
            } else {
                above.max(row[j])
            };
            diag = above;
        }
    }
    row[b.len()]
}

/// ROUGE-L recall: LCS length over reference length.
pub fn rouge_l<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> f64 {
    rouge_l_with(candidate, reference, RougeMode::Recall)
}

pub fn rouge_l_with<T: AsRef<str>>(candidate: &[T], reference: &[T], mode: RougeMode) -> f64 {
    if reference.is_empty() || candidate.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(candidate, reference) as f64;
    let recall = lcs / reference.len() as f64;
    match mode {
        RougeMode::Recall => recall,
        RougeMode::F1 => f1(lcs / candidate.len() as f64, recall),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        let s = toks("place the upper body on the legs");
        assert!((bleu4(&s, &s) - 1.0).abs() < 1e-12);
        assert!(bleu4(&toks("a b c d e"), &toks("v w x y z")) <= 1e-2);
        assert_eq!(bleu4::<&str>(&[], &s), 0.0);
    }

    #[test]
    fn bleu_hand_computed() {
        // p1..p4 = 4/5, 3/4, 2/3, 1/2, equal lengths so no brevity penalty.
        let expected = (0.8f64 * 0.75 * (2.0 / 3.0) * 0.5).powf(0.25);
        let got = bleu4(&toks("a b c d e"), &toks("a b c d f"));
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.6687).abs() < 5e-5);
    }

    #[test]
    fn bleu_brevity_penalty_applies_to_short_candidates() {
        let reference = toks("a b c d e f g h");
        let got = bleu4(&toks("a b c d"), &reference);
        assert!((got - (1.0f64 - 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn rouge_examples() {
        let r = toks("the cat sat down");
        assert_eq!(rouge_n(&r, &r, 1), 1.0);
        assert_eq!(rouge_n(&toks("the cat"), &r, 1), 0.5);
        assert_eq!(rouge_n(&toks("dog ran"), &r, 1), 0.0);
        assert_eq!(rouge_n(&toks("the cat"), &toks("the"), 2), 0.0);
        assert_eq!(rouge_l(&toks("the cat sat"), &r), 0.75);
        assert_eq!(rouge_l(&r, &r), 1.0);
        assert_eq!(rouge_l::<&str>(&[], &r), 0.0);
    }

    #[test]
    fn rouge_f1_mode() {
        let r = toks("the cat sat down");
        let c = toks("the cat");
        // precision 1, recall 0.5
        assert!((rouge_n_with(&c, &r, 1, RougeMode::F1) - 2.0 / 3.0).abs() < 1e-12);
        assert!((rouge_l_with(&c, &r, RougeMode::F1) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn clipping_counts_repeats_once_per_reference_occurrence() {
        assert_eq!(rouge_n(&toks("the the the"), &toks("the cat"), 1), 0.5);
        let got = bleu4(&toks("the the the the"), &toks("the cat the mat"));
        assert!(got < 0.01);
    }
}
