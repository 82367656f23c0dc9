use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::math;

fn ngram_counts<'a>(tokens: &[&'a str], n: usize) -> BTreeMap<Vec<&'a str>, usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence-level BLEU-`max_n` in `[0, 100]`, without smoothing: the
/// geometric mean of clipped n-gram precisions for orders `1..=max_n` times
/// the brevity penalty against the closest reference length. Any zero
/// precision makes the score 0; an empty prediction scores 0.
pub fn bleu<S: AsRef<str>, R: AsRef<str>>(pred: &[S], refs: &[Vec<R>], max_n: usize) -> f64 {
    let pred: Vec<&str> = pred.iter().map(AsRef::as_ref).collect();
    let refs: Vec<Vec<&str>> = refs.iter().map(|r| r.iter().map(AsRef::as_ref).collect()).collect();
    if pred.is_empty() || refs.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = ngram_counts(&pred, n);
        let total: usize = cand.values().sum();
        if total == 0 {
            return 0.0;
        }
        let mut max_ref: BTreeMap<Vec<&str>, usize> = BTreeMap::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let clipped: usize = cand
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return 0.0;
        }
        log_sum += math::ln(clipped as f64 / total as f64);
    }
    let c = pred.len();
    // Closest reference length; ties go to the shorter reference.
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let bp = if c > r { 1.0 } else { math::exp(1.0 - r as f64 / c as f64) };
    100.0 * bp * math::exp(log_sum / max_n as f64)
}
