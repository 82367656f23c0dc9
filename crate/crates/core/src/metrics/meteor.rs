use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::text::stem;

/// Search budget for the chunk-minimizing alignment; beyond it the best
/// alignment found so far is used.
const SEARCH_BUDGET: usize = 200_000;

/// METEOR restricted to exact and stem matching, in `[0, 100]`.
///
/// Unigrams are aligned in two stages (exact surface form, then Porter
/// stem among still-unaligned words). Each stage keeps the maximum number
/// of matches and, among those, the alignment with the fewest chunks.
/// `F = 10PR / (R + 9P)`, penalty `0.5 (chunks / matches)^3`,
/// score `100 F (1 - penalty)`.
pub fn meteor_lite<S: AsRef<str>, R: AsRef<str>>(pred: &[S], reference: &[R]) -> f64 {
    let pred: Vec<&str> = pred.iter().map(AsRef::as_ref).collect();
    let reference: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    if pred.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut align: Vec<Option<usize>> = vec![None; pred.len()];
    let exact: Vec<String> = pred.iter().map(|s| String::from(*s)).collect();
    let exact_ref: Vec<String> = reference.iter().map(|s| String::from(*s)).collect();
    align_stage(&exact, &exact_ref, &mut align);
    let stems: Vec<String> = pred.iter().map(|s| stem(s)).collect();
    let stems_ref: Vec<String> = reference.iter().map(|s| stem(s)).collect();
    align_stage(&stems, &stems_ref, &mut align);

    let matches = align.iter().filter(|a| a.is_some()).count();
    if matches == 0 {
        return 0.0;
    }
    let chunks = count_chunks(&align);
    let p = matches as f64 / pred.len() as f64;
    let r = matches as f64 / reference.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * math::powi(chunks as f64 / matches as f64, 3);
    100.0 * f_mean * (1.0 - penalty)
}

fn count_chunks(align: &[Option<usize>]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for (i, a) in align.iter().enumerate() {
        if let Some(j) = *a {
            match prev {
                Some((pi, pj)) if pi + 1 == i && pj + 1 == j => {}
                _ => chunks += 1,
            }
            prev = Some((i, j));
        } else {
            prev = None;
        }
    }
    chunks
}

/// Extends `align` with a maximum matching between still-unaligned
/// positions whose keys are equal, choosing the fewest resulting chunks.
fn align_stage(pred: &[String], reference: &[String], align: &mut [Option<usize>]) {
    let mut ref_used = vec![false; reference.len()];
    for j in align.iter().flatten() {
        ref_used[*j] = true;
    }
    // How many matches each key can still reach.
    let free_pred: Vec<usize> = (0..pred.len()).filter(|&i| align[i].is_none()).collect();
    if free_pred.is_empty() {
        return;
    }
    let mut search = Search {
        pred,
        reference,
        free_pred: &free_pred,
        best: None,
        budget: SEARCH_BUDGET,
    };
    let mut work = align.to_vec();
    search.dfs(0, &mut work, &mut ref_used);
    if let Some((_, best)) = search.best {
        align.copy_from_slice(&best);
    }
}

struct Search<'a> {
    pred: &'a [String],
    reference: &'a [String],
    free_pred: &'a [usize],
    best: Option<((usize, usize), Vec<Option<usize>>)>,
    budget: usize,
}

impl Search<'_> {
    fn remaining_ref(&self, key: &str, ref_used: &[bool]) -> usize {
        self.reference
            .iter()
            .zip(ref_used)
            .filter(|(r, used)| !**used && r.as_str() == key)
            .count()
    }

    fn remaining_pred(&self, key: &str, from: usize) -> usize {
        self.free_pred[from..].iter().filter(|&&i| self.pred[i] == key).count()
    }

    fn dfs(&mut self, k: usize, align: &mut Vec<Option<usize>>, ref_used: &mut Vec<bool>) {
        if self.budget == 0 {
            return;
        }
        self.budget -= 1;
        if k == self.free_pred.len() {
            let matches = align.iter().filter(|a| a.is_some()).count();
            let score = (matches, usize::MAX - count_chunks(align));
            if self.best.as_ref().map_or(true, |(s, _)| score > *s) {
                self.best = Some((score, align.clone()));
            }
            return;
        }
        let i = self.free_pred[k];
        let key = self.pred[i].as_str();
        let avail = self.remaining_ref(key, ref_used);
        // Skipping is only allowed when the remaining occurrences of this
        // key outnumber the free reference slots, so the match count stays
        // maximal.
        let can_skip = avail < self.remaining_pred(key, k);
        for j in 0..self.reference.len() {
            if ref_used[j] || self.reference[j] != key {
                continue;
            }
            ref_used[j] = true;
            align[i] = Some(j);
            self.dfs(k + 1, align, ref_used);
            align[i] = None;
            ref_used[j] = false;
        }
        if avail == 0 || can_skip {
            self.dfs(k + 1, align, ref_used);
        }
    }
}
