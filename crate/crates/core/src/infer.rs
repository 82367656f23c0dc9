//! Zero-shot step prediction from ingredients plus observed text or video
//! context, multi-step rollout and fixed-window video segmentation.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureSegment, Vocabulary};
use crate::model::ModelParams;
use crate::numerics::{Tape, Var};
use crate::train::EncodedRecipe;
use crate::{Error, Result};

/// One observed step, either as text or as a video segment.
#[derive(Debug, Clone, Copy)]
pub enum Context<'a> {
    Text(&'a [usize]),
    Video(&'a FeatureSegment),
}

/// A predicted step aligned with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    /// 1-based index of the predicted step.
    pub step: usize,
    pub context_len: usize,
    pub horizon: usize,
    pub predicted: Vec<String>,
    pub ground_truth: Vec<String>,
}

/// Predictions for one recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub recipe_id: String,
    pub entries: Vec<PredictionEntry>,
}

/// Encodes contexts on a tape, returning one `1 x D` row per element.
fn encode_contexts(tape: &mut Tape<'_>, net: &crate::model::Net, context: &[Context<'_>]) -> Result<Vec<Var>> {
    let mut text = Vec::new();
    let mut video = Vec::new();
    for c in context {
        match c {
            Context::Text(t) => text.push(*t),
            Context::Video(v) => video.push(*v),
        }
    }
    let text_enc = if text.is_empty() { None } else { Some(net.encode_sentences(tape, &text)?) };
    let video_enc = if video.is_empty() { None } else { Some(net.encode_segments(tape, &video)?) };
    let (mut ti, mut vi) = (0, 0);
    let mut rows = Vec::with_capacity(context.len());
    for c in context {
        let row = match c {
            Context::Text(_) => {
                ti += 1;
                tape.gather_rows(text_enc.expect("text present"), &[ti - 1])?
            }
            Context::Video(_) => {
                vi += 1;
                tape.gather_rows(video_enc.expect("video present"), &[vi - 1])?
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Predicts steps `c+1 ..= c+horizon_max` after observing the ingredients
/// and `context` (`c = context.len()`). Deeper horizons feed the predicted
/// vector back as the next input; decoded sentences are never re-encoded.
/// Returns greedy token ids per horizon.
pub fn predict_steps(
    params: &ModelParams,
    ingredients: &[f64],
    context: &[Context<'_>],
    horizon_max: usize,
) -> Result<Vec<Vec<usize>>> {
    let mut tape = Tape::new();
    let net = params.bind_frozen(&mut tape)?;
    let encoded = encode_contexts(&mut tape, &net, context)?;
    let r0 = net.project_ingredients(&mut tape, &[ingredients])?;
    let mut state = net.zero_state(&mut tape, 1);
    state = net.recipe_step(&mut tape, state, r0)?;
    for x in encoded {
        state = net.recipe_step(&mut tape, state, x)?;
    }
    let mut predictions = Vec::with_capacity(horizon_max);
    for h in 0..horizon_max {
        predictions.push(state.0);
        if h + 1 < horizon_max {
            state = net.recipe_step(&mut tape, state, state.0)?;
        }
    }
    if predictions.is_empty() {
        return Ok(Vec::new());
    }
    let stacked = tape.concat_rows(&predictions)?;
    net.decode_greedy(&mut tape, stacked)
}

/// Recipe RNN hidden state after the ingredients and every step of the
/// recipe: a whole-recipe embedding.
pub fn recipe_embedding(params: &ModelParams, ingredients: &[f64], context: &[Context<'_>]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let net = params.bind_frozen(&mut tape)?;
    let encoded = encode_contexts(&mut tape, &net, context)?;
    let r0 = net.project_ingredients(&mut tape, &[ingredients])?;
    let mut state = net.zero_state(&mut tape, 1);
    state = net.recipe_step(&mut tape, state, r0)?;
    for x in encoded {
        state = net.recipe_step(&mut tape, state, x)?;
    }
    Ok(tape.value(state.0).data().to_vec())
}

/// Which step representation to observe when evaluating a recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observe {
    Text,
    /// Ground-truth video segments, one per step.
    Video,
}

/// Full evaluation protocol for one recipe: for every context length `c` in
/// `contexts` (clamped to `0..N`), predict every remaining step up to
/// `horizon_max` ahead.
pub fn predict_recipe(
    params: &ModelParams,
    vocab: &Vocabulary,
    recipe: &EncodedRecipe,
    observe: Observe,
    contexts: &[usize],
    horizon_max: usize,
) -> Result<PredictionSet> {
    let n = recipe.len();
    let all: Vec<Context<'_>> = match observe {
        Observe::Text => recipe.steps.iter().map(|s| Context::Text(s)).collect(),
        Observe::Video => {
            let segs = recipe.segments.as_ref().ok_or_else(|| Error::InvalidRecipe {
                id: recipe.id.clone(),
                reason: "no video segments".into(),
            })?;
            segs.iter().map(Context::Video).collect()
        }
    };
    let mut tape = Tape::new();
    let net = params.bind_frozen(&mut tape)?;
    let needed = contexts.iter().copied().filter(|&c| c < n).max().map_or(0, |c| c);
    let encoded = encode_contexts(&mut tape, &net, &all[..needed])?;
    let r0 = net.project_ingredients(&mut tape, &[recipe.ingredients.as_slice()])?;
    let mut states = Vec::with_capacity(needed + 1);
    let mut state = net.zero_state(&mut tape, 1);
    state = net.recipe_step(&mut tape, state, r0)?;
    states.push(state);
    for &x in &encoded {
        state = net.recipe_step(&mut tape, state, x)?;
        states.push(state);
    }
    let mut slots = Vec::new();
    let mut rows = Vec::new();
    let mut ctx_sorted: Vec<usize> = contexts.iter().copied().filter(|&c| c < n).collect();
    ctx_sorted.sort_unstable();
    ctx_sorted.dedup();
    for c in ctx_sorted {
        let mut s = states[c];
        let max_h = horizon_max.min(n - c);
        for h in 1..=max_h {
            rows.push(s.0);
            slots.push((c, h));
            if h < max_h {
                s = net.recipe_step(&mut tape, s, s.0)?;
            }
        }
    }
    let mut entries = Vec::with_capacity(slots.len());
    if !rows.is_empty() {
        let stacked = tape.concat_rows(&rows)?;
        let decoded = net.decode_greedy(&mut tape, stacked)?;
        for ((c, h), tokens) in slots.into_iter().zip(decoded) {
            let step = c + h;
            entries.push(PredictionEntry {
                step,
                context_len: c,
                horizon: h,
                predicted: vocab.decode(&tokens),
                ground_truth: recipe.step_tokens[step - 1].clone(),
            });
        }
    }
    Ok(PredictionSet {
        recipe_id: recipe.id.clone(),
        entries,
    })
}

/// Fixed-window segmentation parameters, in raw frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowingConfig {
    pub window_size: usize,
    pub frame_stride: usize,
}

impl WindowingConfig {
    pub const TASTY: Self = Self {
        window_size: 170,
        frame_stride: 5,
    };
    pub const YOUCOOK2: Self = Self {
        window_size: 70,
        frame_stride: 5,
    };
}

impl Default for WindowingConfig {
    fn default() -> Self {
        Self::TASTY
    }
}

/// Cuts `frames[..stop_at]` into consecutive non-overlapping windows of
/// `window_size` raw frames and keeps every `frame_stride`-th frame of each.
/// A trailing partial window survives if it spans at least `frame_stride`
/// raw frames.
pub fn segment_video(frames: &[Vec<f32>], cfg: &WindowingConfig, stop_at: usize) -> Result<Vec<FeatureSegment>> {
    if frames.is_empty() {
        return Err(Error::EmptyStream);
    }
    if cfg.window_size == 0 || cfg.frame_stride == 0 {
        return Err(Error::Config("window_size and frame_stride must be positive".into()));
    }
    if stop_at > frames.len() {
        return Err(Error::IndexOutOfRange {
            what: "video stream",
            index: stop_at,
            size: frames.len(),
        });
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < stop_at {
        let end = (start + cfg.window_size).min(stop_at);
        let full = end - start == cfg.window_size;
        if full || end - start >= cfg.frame_stride {
            let picked: Vec<Vec<f32>> = frames[start..end].iter().step_by(cfg.frame_stride).cloned().collect();
            out.push(FeatureSegment::new(picked)?);
        }
        start = end;
    }
    Ok(out)
}

/// Window-mode video prediction: segments the observed stream and predicts
/// the following `horizon_max` steps. Returns the number of observed
/// segments (the context length) and the decoded token ids per horizon.
pub fn predict_from_video(
    params: &ModelParams,
    ingredients: &[f64],
    frames: &[Vec<f32>],
    cfg: &WindowingConfig,
    stop_at: usize,
    horizon_max: usize,
) -> Result<(usize, Vec<Vec<usize>>)> {
    let segments = if stop_at == 0 { Vec::new() } else { segment_video(frames, cfg, stop_at)? };
    let context: Vec<Context<'_>> = segments.iter().map(Context::Video).collect();
    Ok((segments.len(), predict_steps(params, ingredients, &context, horizon_max)?))
}

/// Ground-truth-segment video prediction.
pub fn predict_from_segments(
    params: &ModelParams,
    ingredients: &[f64],
    segments: &[FeatureSegment],
    horizon_max: usize,
) -> Result<Vec<Vec<usize>>> {
    let context: Vec<Context<'_>> = segments.iter().map(Context::Video).collect();
    predict_steps(params, ingredients, &context, horizon_max)
}
