//! Seeded synthetic corpora for smoke tests, demos and desk-scale
//! experiments.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{FeatureSegment, RecipeRecord};

const VERBS: &[&str] = &[
    "add", "stir", "chop", "mix", "pour", "bake", "boil", "slice", "whisk", "fold", "season", "serve",
];
const NOUNS: &[&str] = &[
    "flour", "sugar", "butter", "egg", "milk", "salt", "onion", "garlic", "tomato", "pepper", "rice",
    "cheese", "oil", "water", "cream", "lemon",
];
const PLACES: &[&str] = &["bowl", "pan", "pot", "oven", "skillet", "tray"];

/// `n` recipes of `steps` distinct random imperative sentences over a
/// vocabulary of a few dozen words.
pub fn random_recipes(n: usize, steps: usize, seed: u64) -> Vec<RecipeRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = Vec::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut sentences = Vec::with_capacity(steps);
        let mut ingredients: Vec<String> = Vec::new();
        for _ in 0..steps {
            let verb = VERBS.choose(&mut rng).expect("non-empty");
            let noun = NOUNS.choose(&mut rng).expect("non-empty");
            let s = if rng.gen_bool(0.5) {
                alloc::format!("{verb} the {noun} .")
            } else {
                let place = PLACES.choose(&mut rng).expect("non-empty");
                alloc::format!("{verb} the {noun} in the {place} .")
            };
            if !ingredients.iter().any(|i| i == noun) {
                ingredients.push(noun.to_string());
            }
            sentences.push(s);
        }
        if seen.contains(&sentences) {
            continue;
        }
        seen.push(sentences.clone());
        out.push(RecipeRecord::new(alloc::format!("r{:03}", out.len()), ingredients, sentences));
    }
    out
}

/// A dish template: step patterns with `{a}` / `{b}` slots filled from two
/// ingredient pools, plus fixed base ingredients.
struct Template {
    name: &'static str,
    base: &'static [&'static str],
    pool_a: &'static [&'static str],
    pool_b: &'static [&'static str],
    steps: &'static [&'static str],
}

const TEMPLATES: &[Template] = &[
    Template {
        name: "pasta",
        base: &["pasta", "water"],
        pool_a: &["spinach", "mushrooms", "zucchini", "peas"],
        pool_b: &["pesto", "parmesan", "basil", "garlic"],
        steps: &[
            "bring the water to a boil .",
            "cook the pasta until tender .",
            "saute the {a} in a pan .",
            "toss the pasta with the {a} and {b} .",
            "serve with more {b} .",
        ],
    },
    Template {
        name: "cake",
        base: &["flour", "sugar"],
        pool_a: &["cocoa", "bananas", "carrots", "almonds"],
        pool_b: &["cinnamon", "vanilla", "honey", "lemon"],
        steps: &[
            "preheat the oven .",
            "whisk the flour and sugar in a bowl .",
            "fold in the {a} and {b} .",
            "bake the batter with the {a} until golden .",
            "dust the cake with {b} .",
        ],
    },
    Template {
        name: "salad",
        base: &["lettuce", "oil"],
        pool_a: &["tomatoes", "cucumbers", "radishes", "beets"],
        pool_b: &["feta", "olives", "walnuts", "croutons"],
        steps: &[
            "chop the {a} .",
            "wash the lettuce .",
            "combine the lettuce and {a} in a bowl .",
            "scatter the {b} on top .",
            "drizzle with oil and serve .",
        ],
    },
];

/// A templated corpus whose step text is determined by the ingredient list.
///
/// Training recipes use a subset of `(a, b)` filler pairs; test recipes use
/// the held-out pairs, so every test dish is an unseen ingredient
/// combination built from ingredients that were all seen in training.
/// Returns `(train, test)`.
pub fn templated_recipes(seed: u64) -> (Vec<RecipeRecord>, Vec<RecipeRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for t in TEMPLATES {
        // Hold out one shifted diagonal of the filler grid: every filler
        // still occurs in training, but never in these combinations.
        let shift = rng.gen_range(0..t.pool_b.len());
        let mut held = Vec::new();
        let mut kept = Vec::new();
        for (i, a) in t.pool_a.iter().enumerate() {
            for (k, b) in t.pool_b.iter().enumerate() {
                if k == (i + shift) % t.pool_b.len() {
                    held.push((*a, *b));
                } else {
                    kept.push((*a, *b));
                }
            }
        }
        kept.shuffle(&mut rng);
        let render = |a: &str, b: &str, id: String| {
            let steps = t.steps.iter().map(|s| s.replace("{a}", a).replace("{b}", b)).collect();
            let mut ingredients: Vec<String> = t.base.iter().map(|s| s.to_string()).collect();
            ingredients.push(a.to_string());
            ingredients.push(b.to_string());
            let mut r = RecipeRecord::new(id, ingredients, steps);
            r.title = alloc::format!("{a} {b} {}", t.name);
            r.category = Some(t.name.to_string());
            r
        };
        for (a, b) in &kept {
            train.push(render(a, b, alloc::format!("{}-{a}-{b}", t.name)));
        }
        for (a, b) in &held {
            test.push(render(a, b, alloc::format!("{}-{a}-{b}", t.name)));
        }
    }
    (train, test)
}

/// Deterministic pseudo-features for a step sentence: a fixed random
/// direction derived from the sentence text, repeated over `frames` frames
/// with per-frame noise of amplitude `noise`.
pub fn step_features(sentence: &str, frames: usize, dim: usize, noise: f32, seed: u64) -> FeatureSegment {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in sentence.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut base_rng = ChaCha8Rng::seed_from_u64(h);
    let base: Vec<f32> = (0..dim).map(|_| base_rng.gen_range(-1.0..1.0)).collect();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(h ^ seed);
    let frames = (0..frames.max(1))
        .map(|_| base.iter().map(|&x| x + noise * noise_rng.gen_range(-1.0f32..1.0)).collect())
        .collect();
    FeatureSegment::new(frames).expect("uniform dims")
}

/// Attaches [`step_features`] segments to every step of every recipe.
pub fn attach_features(recipes: &mut [RecipeRecord], frames: usize, dim: usize, noise: f32, seed: u64) {
    for (i, r) in recipes.iter_mut().enumerate() {
        let segs = r
            .steps
            .iter()
            .enumerate()
            .map(|(j, s)| step_features(s, frames, dim, noise, seed ^ ((i as u64) << 16) ^ j as u64))
            .collect();
        r.segments = Some(segs);
    }
}

/// Flattens recipes into `(steps, ingredients)` counts, handy for sanity
/// checks.
pub fn corpus_size(recipes: &[RecipeRecord]) -> (usize, usize) {
    let steps = recipes.iter().map(|r| r.steps.len()).sum();
    let mut ings: Vec<&str> = recipes.iter().flat_map(|r| r.ingredients.iter().map(String::as_str)).collect();
    ings.sort_unstable();
    ings.dedup();
    (steps, ings.len())
}
