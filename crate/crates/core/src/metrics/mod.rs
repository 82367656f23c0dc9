//! Evaluation: ingredient and verb recall, BLEU, METEOR-lite, per-step
//! curves, max-future-match scoring and Fleiss's kappa.

mod bleu;
mod curve;
mod kappa;
mod meteor;
mod recall;
mod report;

pub use bleu::bleu;
pub use curve::{CurveCell, StepCurve};
pub use kappa::{fleiss_kappa, Kappa, RatingTable};
pub use meteor::meteor_lite;
pub use recall::{
    build_verb_lexicon, ingredient_recall, verb_recall, verbs_per_step, IngredientMatcher, VerbLexicon,
    SEED_VERBS,
};
pub use report::{evaluate, future_match_pairs, max_future_match, score_sentences, EvaluationReport, SentenceMetric};
