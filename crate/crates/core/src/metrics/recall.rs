use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::curve::StepCurve;
use crate::corpus::{IngredientVocabulary, RecipeRecord};
use crate::infer::PredictionSet;
use crate::text::{content_tokens, stem, tokenize};

/// Common imperative cooking verbs, matched by stem.
pub const SEED_VERBS: &[&str] = &[
    "add", "arrange", "bake", "baste", "beat", "blend", "boil", "braise", "bring", "broil", "brown", "brush",
    "chill", "chop", "coat", "combine", "cook", "cool", "cover", "crack", "crumble", "cut", "dice", "dip",
    "discard", "drain", "dredge", "drizzle", "dust", "flip", "fold", "fry", "garnish", "grate", "grease",
    "grill", "heat", "knead", "layer", "marinate", "mash", "melt", "microwave", "mince", "mix", "peel",
    "place", "pour", "preheat", "press", "pulse", "puree", "reduce", "refrigerate", "remove", "rinse",
    "roast", "roll", "saute", "scatter", "scoop", "season", "serve", "set", "shake", "shred", "sift",
    "simmer", "slice", "soak", "spoon", "spread", "sprinkle", "squeeze", "steam", "stir", "strain", "stuff",
    "toast", "top", "toss", "transfer", "trim", "turn", "whisk", "wrap",
];

const LEXICON_SIZE: usize = 250;

fn stems<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    content_tokens(tokens).into_iter().map(stem).collect()
}

/// Detects ingredient mentions by the stem of each name's head (last) token.
#[derive(Debug, Clone)]
pub struct IngredientMatcher {
    heads: BTreeSet<String>,
}

impl IngredientMatcher {
    pub fn new(iv: &IngredientVocabulary) -> Self {
        let heads = iv
            .names()
            .iter()
            .filter_map(|n| {
                let toks = tokenize(n);
                content_tokens(&toks).last().map(|t| stem(t))
            })
            .collect();
        IngredientMatcher { heads }
    }

    /// Head stems of the ingredients mentioned in a tokenized sentence.
    pub fn mentions<S: AsRef<str>>(&self, tokens: &[S]) -> BTreeSet<String> {
        stems(tokens).into_iter().filter(|s| self.heads.contains(s)).collect()
    }
}

/// Verb stems selected for recall evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbLexicon {
    /// Most frequent candidate stems, descending frequency.
    pub selected: Vec<String>,
    /// Every candidate stem with its training frequency.
    pub candidates: BTreeMap<String, u64>,
}

impl VerbLexicon {
    pub fn empty() -> Self {
        VerbLexicon {
            selected: Vec::new(),
            candidates: BTreeMap::new(),
        }
    }

    pub fn contains(&self, stem: &str) -> bool {
        self.selected.iter().any(|s| s == stem)
    }

    /// Lexicon verbs occurring in a tokenized sentence.
    pub fn verbs<S: AsRef<str>>(&self, tokens: &[S]) -> BTreeSet<String> {
        stems(tokens).into_iter().filter(|s| self.contains(s)).collect()
    }
}

/// Verb candidates are sentence-initial stems plus any seed-verb stem.
pub fn build_verb_lexicon(train: &[RecipeRecord]) -> VerbLexicon {
    let seeds: BTreeSet<String> = SEED_VERBS.iter().map(|v| stem(v)).collect();
    let mut candidates: BTreeMap<String, u64> = BTreeMap::new();
    for r in train {
        for step in &r.steps {
            let s = stems(&tokenize(step));
            for (i, st) in s.iter().enumerate() {
                if i == 0 || seeds.contains(st) {
                    *candidates.entry(st.clone()).or_default() += 1;
                }
            }
        }
    }
    let mut ranked: Vec<(&String, &u64)> = candidates.iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let selected = ranked.into_iter().take(LEXICON_SIZE).map(|(s, _)| s.clone()).collect();
    VerbLexicon { selected, candidates }
}

/// Mean number of lexicon verbs per ground-truth step.
pub fn verbs_per_step(lexicon: &VerbLexicon, corpus: &[RecipeRecord]) -> f64 {
    let (mut total, mut n) = (0usize, 0usize);
    for r in corpus {
        for step in &r.steps {
            total += lexicon.verbs(&tokenize(step)).len();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total as f64 / n as f64
    }
}

fn set_recall(
    metric: &str,
    sets: &[PredictionSet],
    extract: impl Fn(&[String]) -> BTreeSet<String>,
) -> StepCurve {
    let obs = sets.iter().flat_map(|set| set.entries.iter()).filter_map(|e| {
        let gt = extract(&e.ground_truth);
        if gt.is_empty() {
            return None;
        }
        let pred = extract(&e.predicted);
        let hit = gt.intersection(&pred).count();
        Some((e.context_len, e.step, hit as f64 / gt.len() as f64))
    });
    StepCurve::from_observations(metric, obs)
}

/// Fraction of ground-truth ingredient mentions also present in the
/// prediction; steps without mentions are left out.
pub fn ingredient_recall(sets: &[PredictionSet], matcher: &IngredientMatcher) -> StepCurve {
    set_recall("ingredient_recall", sets, |t| matcher.mentions(t))
}

pub fn verb_recall(sets: &[PredictionSet], lexicon: &VerbLexicon) -> StepCurve {
    set_recall("verb_recall", sets, |t| lexicon.verbs(t))
}
