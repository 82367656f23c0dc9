//! Recipe records, vocabularies and data splits.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::text::{canonical_name, tokenize};
use crate::{Error, Result};

/// Pre-extracted per-frame features for one video segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSegment {
    frames: Vec<Vec<f32>>,
}

impl FeatureSegment {
    pub fn new(frames: Vec<Vec<f32>>) -> Result<Self> {
        let dim = match frames.first() {
            Some(f) => f.len(),
            None => return Err(Error::EmptySegment),
        };
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != dim) {
            return Err(Error::Shape {
                op: "feature_segment",
                detail: alloc::format!("frame {i} has dim {} but frame 0 has dim {dim}", f.len()),
            });
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Vec<f32>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].len()
    }
}

/// One procedure: ingredient list, ordered step sentences and optionally one
/// feature segment per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub ingredients: Vec<String>,
    pub steps: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(skip)]
    pub segments: Option<Vec<FeatureSegment>>,
}

impl RecipeRecord {
    pub fn new(id: impl Into<String>, ingredients: Vec<String>, steps: Vec<String>) -> Self {
        Self {
            id: id.into(),
            title: String::new(),
            ingredients,
            steps,
            category: None,
            segments: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidRecipe {
            id: self.id.clone(),
            reason,
        };
        if self.steps.is_empty() {
            return Err(invalid("no steps".to_string()));
        }
        if let Some(i) = self.steps.iter().position(|s| s.trim().is_empty()) {
            return Err(invalid(alloc::format!("step {} is empty", i + 1)));
        }
        if let Some(segs) = &self.segments {
            if segs.len() != self.steps.len() {
                return Err(invalid(alloc::format!(
                    "{} segments for {} steps",
                    segs.len(),
                    self.steps.len()
                )));
            }
        }
        Ok(())
    }
}

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;
pub const NUM_SPECIALS: usize = 4;

/// Word vocabulary: the four specials followed by corpus tokens in
/// descending frequency order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabParts")]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

#[derive(Deserialize)]
struct VocabParts {
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl TryFrom<VocabParts> for Vocabulary {
    type Error = Error;

    fn try_from(p: VocabParts) -> Result<Self> {
        Self::from_parts(p.tokens, p.counts)
    }
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its ordered token list and counts.
    pub fn from_parts(tokens: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        let specials = [PAD, BOS, EOS, UNK];
        if tokens.len() < NUM_SPECIALS || tokens[..NUM_SPECIALS] != specials {
            return Err(Error::Config("vocabulary must start with the special tokens".into()));
        }
        if counts.len() != tokens.len() {
            return Err(Error::Config("vocabulary counts do not match tokens".into()));
        }
        let index: BTreeMap<String, usize> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != tokens.len() {
            return Err(Error::Config("duplicate vocabulary token".into()));
        }
        Ok(Self {
            tokens,
            counts,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, token: &str) -> u64 {
        self.index.get(token).map_or(0, |&i| self.counts[i])
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(UNK, String::as_str)
    }

    pub fn encode(&self, sentence: &str) -> Vec<usize> {
        tokenize(sentence).iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }
}

fn rank_by_frequency(counts: BTreeMap<String, u64>) -> Vec<(String, u64)> {
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    // BTreeMap iteration is already lexicographic; a stable sort keeps it
    // inside equal-frequency runs.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    ranked
}

/// Builds the word vocabulary over all step sentences, keeping at most
/// `max_size` entries including the four specials.
pub fn build_vocab(corpus: &[RecipeRecord], max_size: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if max_size < NUM_SPECIALS {
        return Err(Error::Config(alloc::format!(
            "vocabulary size {max_size} is below the {NUM_SPECIALS} special tokens"
        )));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for recipe in corpus {
        for step in &recipe.steps {
            for tok in tokenize(step) {
                *counts.entry(tok).or_default() += 1;
            }
        }
    }
    let mut tokens: Vec<String> = [PAD, BOS, EOS, UNK].iter().map(|s| s.to_string()).collect();
    let mut freq = alloc::vec![0; NUM_SPECIALS];
    for (tok, n) in rank_by_frequency(counts)
        .into_iter()
        .take(max_size - NUM_SPECIALS)
    {
        tokens.push(tok);
        freq.push(n);
    }
    Vocabulary::from_parts(tokens, freq)
}

/// Canonical ingredient names ordered by descending frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IngredientNames")]
pub struct IngredientVocabulary {
    names: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

#[derive(Deserialize)]
struct IngredientNames {
    names: Vec<String>,
}

impl TryFrom<IngredientNames> for IngredientVocabulary {
    type Error = Error;

    fn try_from(p: IngredientNames) -> Result<Self> {
        Self::from_names(p.names)
    }
}

impl IngredientVocabulary {
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let index: BTreeMap<String, usize> =
            names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        if index.len() != names.len() {
            return Err(Error::Config("duplicate ingredient name".into()));
        }
        Ok(Self { names, index })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(&canonical_name(name)).copied()
    }
}

pub fn build_ingredient_vocab(corpus: &[RecipeRecord]) -> Result<IngredientVocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for recipe in corpus {
        // Count each ingredient once per recipe.
        let names: BTreeSet<String> = recipe
            .ingredients
            .iter()
            .map(|n| canonical_name(n))
            .filter(|n| !n.is_empty())
            .collect();
        for n in names {
            *counts.entry(n).or_default() += 1;
        }
    }
    IngredientVocabulary::from_names(rank_by_frequency(counts).into_iter().map(|(n, _)| n).collect())
}

/// Multi-hot ingredient vector plus the number of names that were not in the
/// vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct IngredientEncoding {
    pub vector: Vec<f64>,
    pub unknown: usize,
}

pub fn encode_ingredients(record: &RecipeRecord, iv: &IngredientVocabulary) -> IngredientEncoding {
    let mut vector = alloc::vec![0.0; iv.len()];
    let mut unknown = 0;
    for name in &record.ingredients {
        match iv.id(name) {
            Some(i) => vector[i] = 1.0,
            None => unknown += 1,
        }
    }
    IngredientEncoding { vector, unknown }
}

/// Disjoint train/validation/test id lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<[u32; 3]>,
}

impl SplitManifest {
    /// Shuffles ids with a seeded RNG and cuts them by `ratio`
    /// (train:validation:test).
    pub fn from_ratio(ids: &[String], ratio: [u32; 3], seed: u64) -> Result<Self> {
        let total: u32 = ratio.iter().sum();
        if total == 0 {
            return Err(Error::Config("split ratio sums to zero".into()));
        }
        let mut shuffled = ids.to_vec();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = shuffled.len();
        let n_train = n * ratio[0] as usize / total as usize;
        let n_val = n * ratio[1] as usize / total as usize;
        let test = shuffled.split_off(n_train + n_val);
        let validation = shuffled.split_off(n_train);
        let manifest = Self {
            train: shuffled,
            validation,
            test,
            ratio: Some(ratio),
        };
        manifest.validate(ids)?;
        Ok(manifest)
    }

    /// Checks disjointness and, when `corpus_ids` is non-empty, coverage.
    pub fn validate(&self, corpus_ids: &[String]) -> Result<()> {
        let mut seen = BTreeSet::new();
        for id in self.train.iter().chain(&self.validation).chain(&self.test) {
            if !seen.insert(id.as_str()) {
                return Err(Error::Config(alloc::format!("id {id} appears in more than one split")));
            }
        }
        if !corpus_ids.is_empty() {
            let corpus: BTreeSet<&str> = corpus_ids.iter().map(String::as_str).collect();
            if corpus != seen {
                return Err(Error::Config("splits do not cover the corpus exactly".into()));
            }
        }
        Ok(())
    }
}
