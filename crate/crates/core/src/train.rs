//! Two-stage training: the text model end to end, then the video encoder
//! against the frozen recipe RNN and decoder.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{encode_ingredients, FeatureSegment, IngredientVocabulary, RecipeRecord, Vocabulary};
use crate::model::{ModelConfig, ModelParams, Net};
use crate::numerics::{clip_global_norm, grad_check, AdamConfig, Tape, Tensor, Var};
use crate::text::tokenize;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size_recipes: usize,
    pub lr: f64,
    pub text_epochs: usize,
    pub video_epochs: usize,
    pub scheduled_sampling_prob: f64,
    /// Sampling only happens in epochs strictly after this one (1-based).
    pub scheduled_sampling_start_epoch: usize,
    /// Global L2 gradient norm cap; zero disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size_recipes: 50,
            lr: 0.001,
            text_epochs: 50,
            video_epochs: 25,
            scheduled_sampling_prob: 0.5,
            scheduled_sampling_start_epoch: 5,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.scheduled_sampling_prob) {
            return Err(Error::Config("scheduled_sampling_prob must lie in [0, 1]".into()));
        }
        if self.text_epochs == 0 || self.video_epochs == 0 {
            return Err(Error::Config("epoch counts must be at least 1".into()));
        }
        if self.batch_size_recipes == 0 {
            return Err(Error::Config("batch_size_recipes must be positive".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.clip_norm < 0.0 {
            return Err(Error::Config("clip_norm must be non-negative".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

/// A recipe mapped onto vocabulary ids, ready for batching.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedRecipe {
    pub id: String,
    pub ingredients: Vec<f64>,
    /// Token ids per step.
    pub steps: Vec<Vec<usize>>,
    /// Raw tokens per step, used as ground truth at evaluation time.
    pub step_tokens: Vec<Vec<String>>,
    pub segments: Option<Vec<FeatureSegment>>,
    /// Ingredient names missing from the ingredient vocabulary.
    pub unknown_ingredients: usize,
}

impl EncodedRecipe {
    pub fn encode(record: &RecipeRecord, vocab: &Vocabulary, iv: &IngredientVocabulary) -> Result<Self> {
        record.validate()?;
        let step_tokens: Vec<Vec<String>> = record.steps.iter().map(|s| tokenize(s)).collect();
        if let Some(i) = step_tokens.iter().position(Vec::is_empty) {
            return Err(Error::InvalidRecipe {
                id: record.id.clone(),
                reason: alloc::format!("step {} has no tokens", i + 1),
            });
        }
        let steps = step_tokens
            .iter()
            .map(|toks| toks.iter().map(|t| vocab.id(t)).collect())
            .collect();
        let ing = encode_ingredients(record, iv);
        Ok(Self {
            id: record.id.clone(),
            ingredients: ing.vector,
            steps,
            step_tokens,
            segments: record.segments.clone(),
            unknown_ingredients: ing.unknown,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Number of context inputs after the ingredient input during training.
    pub fn context_inputs(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }
}

pub fn encode_corpus(records: &[RecipeRecord], vocab: &Vocabulary, iv: &IngredientVocabulary) -> Result<Vec<EncodedRecipe>> {
    records.iter().map(|r| EncodedRecipe::encode(r, vocab, iv)).collect()
}

/// Where step context vectors come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextSource {
    Text,
    Video,
}

/// Per-recipe scheduled-sampling decisions: `flags[b][j - 1]` replaces the
/// encoded context of step `j` with the model's own prediction.
pub type SamplingFlags = Vec<Vec<bool>>;

/// Loss of one batch, recorded on a tape.
pub struct BatchLoss {
    pub total: Var,
    pub per_sentence: Var,
    /// Recipe (batch position) owning each decoded sentence row.
    pub owners: Vec<usize>,
    pub words: usize,
}

/// Builds the summed word loss for a batch: the recipe RNN starts from the
/// ingredient projection, step `j`'s prediction is read from the hidden
/// state after `j` inputs and teacher-decoded against step `j`'s words.
pub fn batch_loss(
    tape: &mut Tape<'_>,
    net: &Net,
    batch: &[&EncodedRecipe],
    source: ContextSource,
    sampling: Option<&SamplingFlags>,
) -> Result<BatchLoss> {
    let rows = batch.len();
    let longest = batch.iter().map(|r| r.len()).max().unwrap_or(0);
    if rows == 0 || longest == 0 {
        return Err(Error::NoTrainableRecipes);
    }
    // Encode every step that is used as a context input (all but the last).
    let mut ctx_index = vec![Vec::new(); rows];
    let encoded = {
        let mut count = 0;
        for (b, r) in batch.iter().enumerate() {
            for _ in 0..r.context_inputs() {
                ctx_index[b].push(count);
                count += 1;
            }
        }
        if count == 0 {
            None
        } else {
            Some(match source {
                ContextSource::Text => {
                    let sentences: Vec<&[usize]> = batch
                        .iter()
                        .flat_map(|r| r.steps[..r.context_inputs()].iter().map(Vec::as_slice))
                        .collect();
                    net.encode_sentences(tape, &sentences)?
                }
                ContextSource::Video => {
                    let mut segments: Vec<&FeatureSegment> = Vec::with_capacity(count);
                    for r in batch {
                        let segs = r.segments.as_ref().ok_or_else(|| Error::InvalidRecipe {
                            id: r.id.clone(),
                            reason: "no video segments".to_string(),
                        })?;
                        segments.extend(segs[..r.context_inputs()].iter());
                    }
                    net.encode_segments(tape, &segments)?
                }
            })
        }
    };
    let ingredients: Vec<&[f64]> = batch.iter().map(|r| r.ingredients.as_slice()).collect();
    let r0 = net.project_ingredients(tape, &ingredients)?;
    let mut state = net.zero_state(tape, rows);
    state = net.recipe_step(tape, state, r0)?;
    let mut predictions = vec![state.0];
    for j in 1..longest {
        let encoded = encoded.expect("a step beyond the first implies context inputs");
        // Rows without step j carry any valid row; their losses are dropped.
        let idx: Vec<usize> = ctx_index.iter().map(|ix| ix.get(j - 1).copied().unwrap_or(0)).collect();
        let teacher = tape.gather_rows(encoded, &idx)?;
        let input = match sampling {
            Some(flags) => {
                let mask: Vec<bool> = flags.iter().map(|f| f.get(j - 1).copied().unwrap_or(false)).collect();
                if mask.iter().any(|&m| m) {
                    tape.select_rows(&mask, state.0, teacher)?
                } else {
                    teacher
                }
            }
            None => teacher,
        };
        state = net.recipe_step(tape, state, input)?;
        predictions.push(state.0);
    }
    let stacked = tape.concat_rows(&predictions)?;
    let mut pick = Vec::new();
    let mut owners = Vec::new();
    let mut targets: Vec<&[usize]> = Vec::new();
    for (b, r) in batch.iter().enumerate() {
        for (j, step) in r.steps.iter().enumerate() {
            pick.push(j * rows + b);
            owners.push(b);
            targets.push(step);
        }
    }
    let rhat = tape.gather_rows(stacked, &pick)?;
    let decoded = net.decode_teacher(tape, rhat, &targets)?;
    let total = tape.sum(decoded.per_sentence);
    Ok(BatchLoss {
        total,
        per_sentence: decoded.per_sentence,
        owners,
        words: decoded.words,
    })
}

/// Shuffles `0..len` with a seeded RNG and cuts it into batches.
pub fn make_batches(len: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

fn epoch_rng(seed: u64, epoch: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 8) | stream);
    rng
}

fn shuffle_seed(seed: u64, epoch: usize) -> u64 {
    epoch_rng(seed, epoch, 0).gen()
}

/// Scheduled-sampling decisions for one epoch, one independent coin per
/// context input, for recipes in training order with the given numbers of
/// context inputs. `None` while sampling is inactive (epochs up to and
/// including the start epoch, or zero probability).
pub fn sampling_schedule(cfg: &TrainConfig, epoch: usize, context_inputs: &[usize]) -> Option<SamplingFlags> {
    if epoch <= cfg.scheduled_sampling_start_epoch || cfg.scheduled_sampling_prob <= 0.0 {
        return None;
    }
    let mut coin = epoch_rng(cfg.seed, epoch, 1);
    Some(
        context_inputs
            .iter()
            .map(|&n| (0..n).map(|_| coin.gen::<f64>() < cfg.scheduled_sampling_prob).collect())
            .collect(),
    )
}

/// Statistics of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub stage: String,
    pub epoch: usize,
    /// Mean training loss per scored word.
    pub mean_loss: f64,
    /// Teacher-forced mean validation loss per word.
    pub val_loss: Option<f64>,
    pub sampled_inputs: u64,
    pub teacher_inputs: u64,
    pub words: u64,
    pub skipped_recipes: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

/// Aggregate teacher-forced loss over a set of recipes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub total: f64,
    pub words: u64,
}

impl LossSummary {
    pub fn mean(&self) -> f64 {
        if self.words == 0 {
            0.0
        } else {
            self.total / self.words as f64
        }
    }
}

/// Teacher-forced loss without scheduled sampling, in batches of
/// `batch_size` recipes.
pub fn evaluate_loss(params: &ModelParams, recipes: &[&EncodedRecipe], source: ContextSource, batch_size: usize) -> Result<LossSummary> {
    let mut total = 0.0;
    let mut words = 0u64;
    for chunk in recipes.chunks(batch_size.max(1)) {
        let mut tape = Tape::new();
        let net = params.bind_frozen(&mut tape)?;
        let loss = batch_loss(&mut tape, &net, chunk, source, None)?;
        total += tape.value(loss.total).item();
        words += loss.words as u64;
    }
    Ok(LossSummary { total, words })
}

/// Per-recipe teacher-forced losses of a single batch.
pub fn per_recipe_loss(params: &ModelParams, batch: &[&EncodedRecipe], source: ContextSource) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let net = params.bind_frozen(&mut tape)?;
    let loss = batch_loss(&mut tape, &net, batch, source, None)?;
    let mut out = vec![0.0; batch.len()];
    for (v, &b) in tape.value(loss.per_sentence).data().iter().zip(&loss.owners) {
        out[b] += v;
    }
    Ok(out)
}

struct StageSpec<'a> {
    name: &'static str,
    source: ContextSource,
    epochs: usize,
    trainable: &'a dyn Fn(&str) -> bool,
    sampling: bool,
}

fn run_stage(
    mut params: ModelParams,
    train: &[&EncodedRecipe],
    validation: &[&EncodedRecipe],
    cfg: &TrainConfig,
    spec: StageSpec<'_>,
    skipped: u64,
    observer: &mut dyn FnMut(&EpochStats, &ModelParams),
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::NoTrainableRecipes);
    }
    let adam = cfg.adam();
    let mut report = TrainReport::default();
    for epoch in 1..=spec.epochs {
        let batches = make_batches(train.len(), cfg.batch_size_recipes, shuffle_seed(cfg.seed, epoch));
        let ordered: Vec<usize> = batches.iter().flatten().map(|&i| train[i].context_inputs()).collect();
        let schedule = if spec.sampling { sampling_schedule(cfg, epoch, &ordered) } else { None };
        let mut flags_iter = schedule.map(Vec::into_iter);
        let (mut total, mut words, mut sampled, mut teacher) = (0.0, 0u64, 0u64, 0u64);
        for batch_idx in batches {
            let batch: Vec<&EncodedRecipe> = batch_idx.iter().map(|&i| train[i]).collect();
            let flags: Option<SamplingFlags> = flags_iter
                .as_mut()
                .map(|it| it.by_ref().take(batch.len()).collect());
            for (r, recipe) in batch.iter().enumerate() {
                let n = recipe.context_inputs() as u64;
                let s = flags.as_ref().map_or(0, |fl| fl[r].iter().filter(|&&x| x).count() as u64);
                sampled += s;
                teacher += n - s;
            }
            let mut grads = {
                let mut tape = Tape::new();
                let net = params.bind(&mut tape, spec.trainable)?;
                let loss = batch_loss(&mut tape, &net, &batch, spec.source, flags.as_ref())?;
                let value = tape.value(loss.total).item();
                if !value.is_finite() {
                    let mut per = vec![0.0; batch.len()];
                    for (v, &b) in tape.value(loss.per_sentence).data().iter().zip(&loss.owners) {
                        per[b] += v;
                    }
                    let bad = per.iter().position(|v| !v.is_finite()).unwrap_or(0);
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        recipe: batch[bad].id.clone(),
                    });
                }
                total += value;
                words += loss.words as u64;
                let mut g = tape.backward(loss.total);
                net.collect_grads(&tape, &mut g)
            };
            clip_global_norm(&mut grads, cfg.clip_norm);
            params.params.adam_step(&grads, &adam)?;
        }
        let val_loss = if validation.is_empty() {
            None
        } else {
            Some(evaluate_loss(&params, validation, spec.source, cfg.batch_size_recipes)?.mean())
        };
        let stats = EpochStats {
            stage: spec.name.to_string(),
            epoch,
            mean_loss: if words == 0 { 0.0 } else { total / words as f64 },
            val_loss,
            sampled_inputs: sampled,
            teacher_inputs: teacher,
            words,
            skipped_recipes: skipped,
        };
        observer(&stats, &params);
        report.epochs.push(stats);
    }
    Ok((params, report))
}

/// Stage one: sentence encoder, ingredient projection, recipe RNN and
/// decoder trained jointly on text. The video encoder is left untouched.
pub fn train_text(
    params: ModelParams,
    train: &[&EncodedRecipe],
    validation: &[&EncodedRecipe],
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochStats, &ModelParams),
) -> Result<(ModelParams, TrainReport)> {
    let spec = StageSpec {
        name: "text",
        source: ContextSource::Text,
        epochs: cfg.text_epochs,
        trainable: &|name: &str| !name.starts_with("video."),
        sampling: true,
    };
    run_stage(params, train, validation, cfg, spec, 0, observer)
}

/// Stage two: only `video.*` parameters are updated, every other tensor
/// stays bit-identical. Recipes without segments are skipped and counted.
pub fn train_video(
    params: ModelParams,
    train: &[&EncodedRecipe],
    validation: &[&EncodedRecipe],
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochStats, &ModelParams),
) -> Result<(ModelParams, TrainReport)> {
    let usable: Vec<&EncodedRecipe> = train.iter().copied().filter(|r| r.segments.is_some()).collect();
    let skipped = (train.len() - usable.len()) as u64;
    if usable.is_empty() {
        return Err(Error::NoTrainableRecipes);
    }
    let val: Vec<&EncodedRecipe> = validation.iter().copied().filter(|r| r.segments.is_some()).collect();
    let spec = StageSpec {
        name: "video",
        source: ContextSource::Video,
        epochs: cfg.video_epochs,
        trainable: &|name: &str| name.starts_with("video."),
        sampling: false,
    };
    run_stage(params, &usable, &val, cfg, spec, skipped, observer)
}

/// Finite-difference step of [`check_gradients`].
pub const GRADCHECK_EPS: f64 = 3e-3;

/// Central-difference check of the full training loss on a two-recipe
/// micro-batch (one scheduled-sampling substitution) at dims of at most 8,
/// covering every text-path parameter. Returns the maximum relative error.
///
/// Context steps are single tokens so the loss has no max-pool kinks, which
/// allows a step large enough to resolve the smallest gradients above f64
/// rounding noise.
pub fn check_gradients(seed: u64) -> Result<f64> {
    let mut config = ModelConfig::new(9, 3);
    config.embed_dim = 3;
    config.enc_hidden = 2;
    config.dec_hidden = 4;
    config.vid_hidden = 2;
    config.recipe_hidden = 4;
    config.feature_dim = 3;
    let base = ModelParams::init(config.clone(), seed)?;
    let names: Vec<String> = base.params.names().filter(|n| !n.starts_with("video.")).map(String::from).collect();
    // Larger weights keep gradients well above finite-difference noise.
    let mut point = Vec::with_capacity(names.len());
    for n in &names {
        point.push(base.params.get(n)?.map(|x| 3.0 * x));
    }
    let recipe = |id: &str, ingredients: Vec<f64>, steps: Vec<Vec<usize>>| EncodedRecipe {
        id: id.to_string(),
        ingredients,
        steps,
        step_tokens: Vec::new(),
        segments: None,
        unknown_ingredients: 0,
    };
    let recipes = [
        recipe("a", vec![1.0, 0.0, 1.0], vec![vec![4], vec![6, 7, 8]]),
        recipe("b", vec![0.0, 1.0, 0.0], vec![vec![8], vec![5], vec![7, 4]]),
    ];
    let batch: Vec<&EncodedRecipe> = recipes.iter().collect();
    let flags: SamplingFlags = vec![vec![false], vec![true, false]];
    let f = |ts: &[Tensor]| -> Result<(f64, Vec<Tensor>)> {
        let mut set = base.params.clone();
        for (n, t) in names.iter().zip(ts) {
            set.insert(n.clone(), t.clone());
        }
        let m = ModelParams::from_params(config.clone(), set)?;
        let mut tape = Tape::new();
        let net = m.bind(&mut tape, &|n| !n.starts_with("video."))?;
        let loss = batch_loss(&mut tape, &net, &batch, ContextSource::Text, Some(&flags))?;
        let value = tape.value(loss.total).item();
        let mut g = tape.backward(loss.total);
        let mut grads = net.collect_grads(&tape, &mut g);
        Ok((value, names.iter().map(|n| grads.remove(n).expect("trainable")).collect()))
    };
    grad_check(f, &point, GRADCHECK_EPS)
}
