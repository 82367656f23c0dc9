use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::bleu::bleu;
use super::curve::StepCurve;
use super::meteor::meteor_lite;
use super::recall::{ingredient_recall, verb_recall, IngredientMatcher, VerbLexicon};
use crate::infer::PredictionSet;
use crate::text::content_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceMetric {
    Bleu1,
    Bleu4,
    MeteorLite,
}

impl SentenceMetric {
    pub const ALL: [SentenceMetric; 3] = [SentenceMetric::Bleu1, SentenceMetric::Bleu4, SentenceMetric::MeteorLite];

    pub fn name(self) -> &'static str {
        match self {
            SentenceMetric::Bleu1 => "bleu1",
            SentenceMetric::Bleu4 => "bleu4",
            SentenceMetric::MeteorLite => "meteor_lite",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Scores one tokenized sentence against one reference, punctuation
    /// tokens removed.
    pub fn score<S: AsRef<str>, R: AsRef<str>>(self, pred: &[S], reference: &[R]) -> f64 {
        let p = content_tokens(pred);
        let r = content_tokens(reference);
        match self {
            SentenceMetric::Bleu1 => bleu(&p, &[r], 1),
            SentenceMetric::Bleu4 => bleu(&p, &[r], 4),
            SentenceMetric::MeteorLite => meteor_lite(&p, &r),
        }
    }
}

/// Scores every prediction against its aligned ground-truth step.
pub fn score_sentences(sets: &[PredictionSet], metric: SentenceMetric) -> StepCurve {
    let obs = sets
        .iter()
        .flat_map(|s| s.entries.iter())
        .map(|e| (e.context_len, e.step, metric.score(&e.predicted, &e.ground_truth)));
    StepCurve::from_observations(metric.name(), obs)
}

/// Per entry of `set`: `(aligned score, best score over the aligned step and
/// the next window - 1 ground-truth steps)`.
pub fn future_match_pairs(set: &PredictionSet, window: usize, metric: SentenceMetric) -> Vec<(f64, f64)> {
    let mut gt: BTreeMap<usize, &[String]> = BTreeMap::new();
    for e in &set.entries {
        gt.entry(e.step).or_insert(&e.ground_truth);
    }
    set.entries
        .iter()
        .map(|e| {
            let aligned = metric.score(&e.predicted, &e.ground_truth);
            let best = (e.step + 1..e.step + window.max(1))
                .filter_map(|s| gt.get(&s))
                .map(|r| metric.score(&e.predicted, r))
                .fold(aligned, f64::max);
            (aligned, best)
        })
        .collect()
}

/// Scores each prediction by its best match among the aligned step and the
/// following `window - 1` steps.
pub fn max_future_match(sets: &[PredictionSet], window: usize, metric: SentenceMetric) -> StepCurve {
    let mut obs = Vec::new();
    for set in sets {
        for (e, (_, best)) in set.entries.iter().zip(future_match_pairs(set, window, metric)) {
            obs.push((e.context_len, e.step, best));
        }
    }
    StepCurve::from_observations(alloc::format!("max_future_{}", metric.name()), obs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub recipes: usize,
    pub predictions: usize,
    /// Mean number of lexicon verbs per ground-truth step.
    pub gt_verbs_per_step: f64,
    /// Support-weighted next-step (horizon 1) mean per curve.
    pub next_step: BTreeMap<String, f64>,
    pub curves: Vec<StepCurve>,
}

pub fn evaluate(
    sets: &[PredictionSet],
    matcher: &IngredientMatcher,
    lexicon: &VerbLexicon,
    window: usize,
) -> EvaluationReport {
    let mut curves = Vec::new();
    curves.push(ingredient_recall(sets, matcher));
    curves.push(verb_recall(sets, lexicon));
    for m in SentenceMetric::ALL {
        curves.push(score_sentences(sets, m));
    }
    for m in SentenceMetric::ALL {
        curves.push(max_future_match(sets, window, m));
    }
    let next_step = curves
        .iter()
        .filter_map(|c| c.mean_at_horizon(1).map(|v| (c.metric.clone(), v)))
        .collect();
    let mut steps: BTreeMap<(&str, usize), usize> = BTreeMap::new();
    for s in sets {
        for e in &s.entries {
            steps.insert((s.recipe_id.as_str(), e.step), lexicon.verbs(&e.ground_truth).len());
        }
    }
    let gt_verbs_per_step = if steps.is_empty() {
        0.0
    } else {
        steps.values().sum::<usize>() as f64 / steps.len() as f64
    };
    EvaluationReport {
        recipes: sets.len(),
        predictions: sets.iter().map(|s| s.entries.len()).sum(),
        gt_verbs_per_step,
        next_step,
        curves,
    }
}
