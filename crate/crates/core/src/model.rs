//! Sentence encoder, recipe RNN, sentence decoder, video encoder and the
//! ingredient projection.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureSegment, BOS_ID, EOS_ID, PAD_ID};
use crate::math;
use crate::numerics::{lstm_cell, Grads, Gradients, LstmVars, ParamSet, Tape, Tensor, Var};
use crate::{Error, Result};

/// Layer sizes. The sentence and video encodings, the ingredient projection
/// and the recipe RNN hidden state all share one dimension
/// `2 * enc_hidden == 2 * vid_hidden == recipe_hidden`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub ingredient_vocab_size: usize,
    pub embed_dim: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub vid_hidden: usize,
    pub recipe_hidden: usize,
    pub feature_dim: usize,
    pub max_decode_len: usize,
    /// When false the recipe RNN starts from a zero input instead of the
    /// projected ingredient vector.
    pub use_ingredients: bool,
}

impl ModelConfig {
    /// Full-size layers for the given vocabularies.
    pub fn new(vocab_size: usize, ingredient_vocab_size: usize) -> Self {
        Self {
            vocab_size,
            ingredient_vocab_size,
            embed_dim: 256,
            enc_hidden: 512,
            dec_hidden: 512,
            vid_hidden: 512,
            recipe_hidden: 1024,
            feature_dim: 2048,
            max_decode_len: 20,
            use_ingredients: true,
        }
    }

    /// Width of a step encoding.
    pub fn context_dim(&self) -> usize {
        2 * self.enc_hidden
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("vocab_size", self.vocab_size),
            ("ingredient_vocab_size", self.ingredient_vocab_size),
            ("embed_dim", self.embed_dim),
            ("enc_hidden", self.enc_hidden),
            ("dec_hidden", self.dec_hidden),
            ("vid_hidden", self.vid_hidden),
            ("recipe_hidden", self.recipe_hidden),
            ("feature_dim", self.feature_dim),
            ("max_decode_len", self.max_decode_len),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(alloc::format!("{name} must be positive")));
        }
        if self.vocab_size <= EOS_ID {
            return Err(Error::Config("vocab_size must cover the special tokens".into()));
        }
        let d = self.context_dim();
        if self.recipe_hidden != d || 2 * self.vid_hidden != d {
            return Err(Error::Config(alloc::format!(
                "recipe_hidden ({}) must equal 2*enc_hidden ({d}) and 2*vid_hidden ({})",
                self.recipe_hidden,
                2 * self.vid_hidden
            )));
        }
        Ok(())
    }
}

/// Model configuration plus the named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub params: ParamSet,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::from_rows(rows, cols, data).expect("sized")
}

fn lstm_init(set: &mut ParamSet, rng: &mut ChaCha8Rng, prefix: &str, input: usize, hidden: usize) {
    let fan_in = input + hidden;
    set.insert(
        alloc::format!("{prefix}.w"),
        uniform(rng, fan_in, 4 * hidden, 1.0 / math::sqrt(fan_in as f64)),
    );
    let mut b = Tensor::zeros(1, 4 * hidden);
    for x in &mut b.data_mut()[hidden..2 * hidden] {
        *x = 1.0;
    }
    set.insert(alloc::format!("{prefix}.b"), b);
}

fn dense_init(set: &mut ParamSet, rng: &mut ChaCha8Rng, prefix: &str, input: usize, output: usize) {
    set.insert(
        alloc::format!("{prefix}.w"),
        uniform(rng, input, output, 1.0 / math::sqrt(input.max(1) as f64)),
    );
    set.insert(alloc::format!("{prefix}.b"), Tensor::zeros(1, output));
}

impl ModelParams {
    /// Seeded initialization: weights uniform in `±1/sqrt(fan_in)`, zero
    /// biases, forget-gate biases at one.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let d = c.context_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = ParamSet::new();
        set.insert(
            "encoder.embedding",
            uniform(&mut rng, c.vocab_size, c.embed_dim, 1.0 / math::sqrt(c.embed_dim as f64)),
        );
        lstm_init(&mut set, &mut rng, "encoder.fwd", c.embed_dim, c.enc_hidden);
        lstm_init(&mut set, &mut rng, "encoder.bwd", c.embed_dim, c.enc_hidden);
        dense_init(&mut set, &mut rng, "ingredient_proj", c.ingredient_vocab_size, d);
        lstm_init(&mut set, &mut rng, "recipe", d, c.recipe_hidden);
        dense_init(&mut set, &mut rng, "decoder.init", d, 2 * c.dec_hidden);
        lstm_init(&mut set, &mut rng, "decoder.lstm", c.embed_dim, c.dec_hidden);
        dense_init(&mut set, &mut rng, "decoder.out", c.dec_hidden, c.vocab_size);
        lstm_init(&mut set, &mut rng, "video.fwd", c.feature_dim, c.vid_hidden);
        lstm_init(&mut set, &mut rng, "video.bwd", c.feature_dim, c.vid_hidden);
        Ok(Self { config, params: set })
    }

    /// Rebuilds a model from loaded tensors, checking every expected name
    /// and shape against `config`.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        let reference = Self::init(config.clone(), 0)?;
        for (name, t) in reference.params.iter() {
            let got = params.get(name)?;
            if got.dims() != t.dims() {
                return Err(Error::Shape {
                    op: "load_params",
                    detail: alloc::format!("{name}: expected {:?}, found {:?}", t.dims(), got.dims()),
                });
            }
        }
        Ok(Self { config, params })
    }

    /// Binds every parameter onto `tape`; names for which `trainable`
    /// returns false are bound as constants.
    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>, trainable: &dyn Fn(&str) -> bool) -> Result<Net> {
        let mut bound = Vec::new();
        for (name, t) in self.params.iter() {
            let v = tape.param(t, trainable(name));
            bound.push((String::from(name), v, trainable(name)));
        }
        let find = |name: &str| -> Result<Var> {
            bound
                .iter()
                .find(|(n, _, _)| n == name)
                .map(|(_, v, _)| *v)
                .ok_or_else(|| Error::MissingParam(name.into()))
        };
        let c = &self.config;
        let lstm = |prefix: &str, hidden: usize| -> Result<LstmVars> {
            Ok(LstmVars {
                w: find(&alloc::format!("{prefix}.w"))?,
                b: find(&alloc::format!("{prefix}.b"))?,
                hidden,
            })
        };
        let net = Net {
            config: c.clone(),
            embedding: find("encoder.embedding")?,
            enc_fwd: lstm("encoder.fwd", c.enc_hidden)?,
            enc_bwd: lstm("encoder.bwd", c.enc_hidden)?,
            ing_w: find("ingredient_proj.w")?,
            ing_b: find("ingredient_proj.b")?,
            recipe: lstm("recipe", c.recipe_hidden)?,
            dec_init_w: find("decoder.init.w")?,
            dec_init_b: find("decoder.init.b")?,
            dec: lstm("decoder.lstm", c.dec_hidden)?,
            out_w: find("decoder.out.w")?,
            out_b: find("decoder.out.b")?,
            vid_fwd: lstm("video.fwd", c.vid_hidden)?,
            vid_bwd: lstm("video.bwd", c.vid_hidden)?,
            trainable: bound.into_iter().filter(|(_, _, t)| *t).map(|(n, v, _)| (n, v)).collect(),
        };
        Ok(net)
    }

    /// Binds everything as constants, for inference.
    pub fn bind_frozen<'p>(&'p self, tape: &mut Tape<'p>) -> Result<Net> {
        self.bind(tape, &|_| false)
    }

    /// Sentence encoding of one token list.
    pub fn encode_sentence(&self, tokens: &[usize]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let net = self.bind_frozen(&mut tape)?;
        let r = net.encode_sentences(&mut tape, &[tokens])?;
        Ok(tape.value(r).data().to_vec())
    }

    /// Video encoding of one feature segment.
    pub fn encode_video(&self, segment: &FeatureSegment) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let net = self.bind_frozen(&mut tape)?;
        let v = net.encode_segments(&mut tape, &[segment])?;
        Ok(tape.value(v).data().to_vec())
    }

    /// Initial recipe RNN input from a multi-hot ingredient vector.
    pub fn project_ingredients(&self, ingredients: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let net = self.bind_frozen(&mut tape)?;
        let r0 = net.project_ingredients(&mut tape, &[ingredients])?;
        Ok(tape.value(r0).data().to_vec())
    }

    /// One recipe RNN step; returns the new state. The prediction for the
    /// next step is `state.h` itself.
    pub fn recipe_step(&self, state: &RecipeState, context: &[f64]) -> Result<RecipeState> {
        let mut tape = Tape::new();
        let net = self.bind_frozen(&mut tape)?;
        let h = tape.constant(Tensor::row_vector(state.h.clone()));
        let c = tape.constant(Tensor::row_vector(state.c.clone()));
        let x = tape.constant(Tensor::row_vector(context.to_vec()));
        let (h, c) = net.recipe_step(&mut tape, (h, c), x)?;
        Ok(RecipeState {
            h: tape.value(h).data().to_vec(),
            c: tape.value(c).data().to_vec(),
            steps: state.steps + 1,
        })
    }

    /// Greedy decode of one predicted step vector.
    pub fn decode_greedy(&self, prediction: &[f64]) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let net = self.bind_frozen(&mut tape)?;
        let r = tape.constant(Tensor::row_vector(prediction.to_vec()));
        Ok(net.decode_greedy(&mut tape, r)?.remove(0))
    }

    /// Teacher-forced per-word losses for one target sentence: one entry per
    /// token plus the end-of-sentence marker.
    pub fn decode_teacher_forced(&self, prediction: &[f64], tokens: &[usize]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let net = self.bind_frozen(&mut tape)?;
        let r = tape.constant(Tensor::row_vector(prediction.to_vec()));
        let out = net.decode_teacher(&mut tape, r, &[tokens])?;
        Ok(out.word_losses.iter().map(|&v| tape.value(v).item()).collect())
    }
}

/// Recipe RNN state after `steps` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RecipeState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub steps: usize,
}

impl RecipeState {
    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            h: vec![0.0; config.recipe_hidden],
            c: vec![0.0; config.recipe_hidden],
            steps: 0,
        }
    }

    /// Prediction of the next step's encoding.
    pub fn prediction(&self) -> &[f64] {
        &self.h
    }
}

/// Result of teacher-forced decoding of a batch of sentences.
pub struct DecodeLoss {
    /// `rows x 1` summed word loss per sentence.
    pub per_sentence: Var,
    /// One `rows x 1` column of weighted word losses per decoder step.
    pub word_losses: Vec<Var>,
    /// Number of scored words (tokens plus end markers).
    pub words: usize,
}

/// A model bound to a tape.
pub struct Net {
    config: ModelConfig,
    embedding: Var,
    enc_fwd: LstmVars,
    enc_bwd: LstmVars,
    ing_w: Var,
    ing_b: Var,
    recipe: LstmVars,
    dec_init_w: Var,
    dec_init_b: Var,
    dec: LstmVars,
    out_w: Var,
    out_b: Var,
    vid_fwd: LstmVars,
    vid_bwd: LstmVars,
    trainable: Vec<(String, Var)>,
}

impl Net {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Gradients of the trainable parameters; unreached ones are zero.
    pub fn collect_grads(&self, tape: &Tape<'_>, grads: &mut Gradients) -> Grads {
        let mut out = Grads::new();
        for (name, v) in &self.trainable {
            let g = grads.take(*v).unwrap_or_else(|| {
                let t = tape.value(*v);
                Tensor::new(t.shape().to_vec(), vec![0.0; t.len()]).expect("shape")
            });
            out.insert(name.clone(), g);
        }
        out
    }

    /// Bidirectional LSTM over padded time steps, max-pooled over each row's
    /// valid steps. `inputs[t]` is `rows x in`; returns `rows x 2H`.
    fn bi_encode(
        &self,
        tape: &mut Tape<'_>,
        fwd: LstmVars,
        bwd: LstmVars,
        inputs: &[Var],
        lengths: &[usize],
    ) -> Result<Var> {
        let rows = lengths.len();
        let hd = fwd.hidden;
        let steps = inputs.len();
        let run = |tape: &mut Tape<'_>, lstm: LstmVars, order: &mut dyn Iterator<Item = usize>| -> Result<Vec<Var>> {
            let mut h = tape.constant(Tensor::zeros(rows, hd));
            let mut c = tape.constant(Tensor::zeros(rows, hd));
            let mut outs = vec![h; steps];
            for t in order {
                let (nh, nc) = lstm_cell(tape, inputs[t], h, c, lstm)?;
                let mask: Vec<bool> = lengths.iter().map(|&l| t < l).collect();
                if mask.iter().all(|&m| m) {
                    h = nh;
                    c = nc;
                } else {
                    h = tape.select_rows(&mask, nh, h)?;
                    c = tape.select_rows(&mask, nc, c)?;
                }
                outs[t] = h;
            }
            Ok(outs)
        };
        let fwd_out = run(tape, fwd, &mut (0..steps))?;
        let bwd_out = run(tape, bwd, &mut (0..steps).rev())?;
        let pf = tape.max_pool(&fwd_out, lengths)?;
        let pb = tape.max_pool(&bwd_out, lengths)?;
        tape.concat_cols(&[pf, pb])
    }

    /// Encodes a batch of token lists into `rows x D`.
    pub fn encode_sentences(&self, tape: &mut Tape<'_>, sentences: &[&[usize]]) -> Result<Var> {
        if sentences.iter().any(|s| s.is_empty()) {
            return Err(Error::EmptyStep);
        }
        let lengths: Vec<usize> = sentences.iter().map(|s| s.len()).collect();
        let steps = lengths.iter().copied().max().unwrap_or(0);
        let mut inputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let ids: Vec<usize> = sentences.iter().map(|s| s.get(t).copied().unwrap_or(PAD_ID)).collect();
            inputs.push(tape.gather_rows(self.embedding, &ids)?);
        }
        self.bi_encode(tape, self.enc_fwd, self.enc_bwd, &inputs, &lengths)
    }

    /// Encodes a batch of feature segments into `rows x D`.
    pub fn encode_segments(&self, tape: &mut Tape<'_>, segments: &[&FeatureSegment]) -> Result<Var> {
        let dim = self.config.feature_dim;
        for s in segments {
            if s.is_empty() {
                return Err(Error::EmptySegment);
            }
            if s.dim() != dim {
                return Err(Error::Shape {
                    op: "encode_video",
                    detail: alloc::format!("frame dim {} but feature_dim is {dim}", s.dim()),
                });
            }
        }
        let lengths: Vec<usize> = segments.iter().map(|s| s.len()).collect();
        let steps = lengths.iter().copied().max().unwrap_or(0);
        let mut inputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut data = Vec::with_capacity(segments.len() * dim);
            for s in segments {
                match s.frames().get(t) {
                    Some(f) => data.extend(f.iter().map(|&x| x as f64)),
                    None => data.extend(core::iter::repeat(0.0).take(dim)),
                }
            }
            inputs.push(tape.constant(Tensor::from_rows(segments.len(), dim, data)?));
        }
        self.bi_encode(tape, self.vid_fwd, self.vid_bwd, &inputs, &lengths)
    }

    /// `tanh(I W + b)` per row, or zeros when ingredients are disabled.
    pub fn project_ingredients(&self, tape: &mut Tape<'_>, rows: &[&[f64]]) -> Result<Var> {
        let d = self.config.context_dim();
        if !self.config.use_ingredients {
            return Ok(tape.constant(Tensor::zeros(rows.len(), d)));
        }
        let n = self.config.ingredient_vocab_size;
        let mut data = Vec::with_capacity(rows.len() * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::Shape {
                    op: "project_ingredients",
                    detail: alloc::format!("ingredient vector of {} for vocabulary of {n}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        let i = tape.constant(Tensor::from_rows(rows.len(), n, data)?);
        let z = tape.matmul(i, self.ing_w)?;
        let z = tape.add_row(z, self.ing_b)?;
        Ok(tape.tanh(z))
    }

    pub fn zero_state(&self, tape: &mut Tape<'_>, rows: usize) -> (Var, Var) {
        let h = tape.constant(Tensor::zeros(rows, self.config.recipe_hidden));
        (h, tape.constant(Tensor::zeros(rows, self.config.recipe_hidden)))
    }

    /// One recipe RNN step; the returned `h` is the next-step prediction.
    pub fn recipe_step(&self, tape: &mut Tape<'_>, state: (Var, Var), context: Var) -> Result<(Var, Var)> {
        lstm_cell(tape, context, state.0, state.1, self.recipe)
    }

    fn decoder_start(&self, tape: &mut Tape<'_>, prediction: Var) -> Result<(Var, Var)> {
        let d = self.config.context_dim();
        if tape.value(prediction).cols() != d {
            return Err(Error::Shape {
                op: "decode_sentence",
                detail: alloc::format!("prediction width {} but D is {d}", tape.value(prediction).cols()),
            });
        }
        let hd = self.config.dec_hidden;
        let z = tape.matmul(prediction, self.dec_init_w)?;
        let z = tape.add_row(z, self.dec_init_b)?;
        let z = tape.tanh(z);
        Ok((tape.slice_cols(z, 0, hd)?, tape.slice_cols(z, hd, hd)?))
    }

    fn decoder_logits(&self, tape: &mut Tape<'_>, h: Var) -> Result<Var> {
        let l = tape.matmul(h, self.out_w)?;
        tape.add_row(l, self.out_b)
    }

    /// Teacher-forced decoding of `targets[i]` from `predictions` row `i`.
    /// Each sentence is scored on its tokens followed by the end marker;
    /// padding positions carry zero weight.
    pub fn decode_teacher(&self, tape: &mut Tape<'_>, predictions: Var, targets: &[&[usize]]) -> Result<DecodeLoss> {
        let rows = targets.len();
        if tape.value(predictions).rows() != rows {
            return Err(Error::Shape {
                op: "decode_sentence",
                detail: alloc::format!("{} predictions for {rows} targets", tape.value(predictions).rows()),
            });
        }
        let (mut h, mut c) = self.decoder_start(tape, predictions)?;
        let longest = targets.iter().map(|t| t.len()).max().unwrap_or(0);
        let mut word_losses = Vec::with_capacity(longest + 1);
        let mut words = 0;
        for t in 0..=longest {
            let inputs: Vec<usize> = targets
                .iter()
                .map(|s| if t == 0 { BOS_ID } else { s.get(t - 1).copied().unwrap_or(PAD_ID) })
                .collect();
            let x = tape.gather_rows(self.embedding, &inputs)?;
            let (nh, nc) = lstm_cell(tape, x, h, c, self.dec)?;
            h = nh;
            c = nc;
            let logits = self.decoder_logits(tape, h)?;
            let mut goal = Vec::with_capacity(rows);
            let mut weight = Vec::with_capacity(rows);
            for s in targets {
                let (g, w) = match t.cmp(&s.len()) {
                    core::cmp::Ordering::Less => (s[t], 1.0),
                    core::cmp::Ordering::Equal => (EOS_ID, 1.0),
                    core::cmp::Ordering::Greater => (PAD_ID, 0.0),
                };
                words += (w != 0.0) as usize;
                goal.push(g);
                weight.push(w);
            }
            word_losses.push(tape.softmax_xent(logits, &goal, &weight)?);
        }
        let mut per_sentence = word_losses[0];
        for &l in &word_losses[1..] {
            per_sentence = tape.add(per_sentence, l)?;
        }
        Ok(DecodeLoss {
            per_sentence,
            word_losses,
            words,
        })
    }

    /// Greedy argmax decoding from each prediction row until the end marker
    /// or `max_decode_len` tokens. Padding and begin markers are never
    /// emitted.
    pub fn decode_greedy(&self, tape: &mut Tape<'_>, predictions: Var) -> Result<Vec<Vec<usize>>> {
        let rows = tape.value(predictions).rows();
        let (mut h, mut c) = self.decoder_start(tape, predictions)?;
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); rows];
        let mut done = vec![false; rows];
        let mut prev = vec![BOS_ID; rows];
        for _ in 0..self.config.max_decode_len {
            let x = tape.gather_rows(self.embedding, &prev)?;
            let (nh, nc) = lstm_cell(tape, x, h, c, self.dec)?;
            h = nh;
            c = nc;
            let logits = self.decoder_logits(tape, h)?;
            let l = tape.value(logits);
            for r in 0..rows {
                if done[r] {
                    continue;
                }
                let row = l.row(r);
                let mut best = EOS_ID;
                for (i, &x) in row.iter().enumerate() {
                    if i == PAD_ID || i == BOS_ID {
                        continue;
                    }
                    if x > row[best] {
                        best = i;
                    }
                }
                if best == EOS_ID {
                    done[r] = true;
                } else {
                    out[r].push(best);
                    prev[r] = best;
                }
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests;
