//! One function per subcommand. Each reads its inputs from the run
//! directory, calls into `stepcast-core` and writes its artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use stepcast_core::corpus::{build_ingredient_vocab, build_vocab, IngredientVocabulary, RecipeRecord, SplitManifest, Vocabulary};
use stepcast_core::infer::{predict_from_video, predict_recipe, recipe_embedding, Context, Observe, PredictionEntry, PredictionSet};
use stepcast_core::metrics::{build_verb_lexicon, evaluate, IngredientMatcher, VerbLexicon};
use stepcast_core::model::ModelParams;
use stepcast_core::numerics::check_primitives;
use stepcast_core::synthetic;
use stepcast_core::train::{self, EncodedRecipe, EpochStats, TrainReport};

use crate::artifacts::{self, IngestSummary, Layout, Meta, ReportFile};
use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io;

/// Tolerance `gradcheck` enforces.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    /// Observe ground-truth step text.
    Text,
    /// Observe ground-truth per-step video segments.
    Video,
    /// Observe the concatenated video stream cut into fixed windows.
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitName {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    /// Random imperative sentences.
    Random,
    /// Ingredient-determined dish templates in three categories.
    Templated,
}

fn layout(cfg: &RunConfig) -> Layout {
    Layout::new(&cfg.out_dir)
}

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn load_split_manifest(cfg: &RunConfig) -> Result<SplitManifest> {
    let path = layout(cfg).splits();
    if path.is_file() {
        io::load_splits(&path)
    } else {
        Err(Error::MissingArtifact {
            what: "split manifest (run `ingest` first)",
            path,
        })
    }
}

fn select<'a>(records: &'a [RecipeRecord], ids: &[String]) -> Result<Vec<&'a RecipeRecord>> {
    ids.iter()
        .map(|id| {
            records
                .iter()
                .find(|r| &r.id == id)
                .ok_or_else(|| Error::Config(format!("split id {id} is not in the corpus")))
        })
        .collect()
}

fn split_ids(manifest: &SplitManifest, split: SplitName) -> Vec<String> {
    match split {
        SplitName::Train => manifest.train.clone(),
        SplitName::Validation => manifest.validation.clone(),
        SplitName::Test => manifest.test.clone(),
        SplitName::All => manifest
            .train
            .iter()
            .chain(&manifest.validation)
            .chain(&manifest.test)
            .cloned()
            .collect(),
    }
}

struct Vocabs {
    vocab: Vocabulary,
    ingredients: IngredientVocabulary,
}

fn load_vocabs(cfg: &RunConfig) -> Result<Vocabs> {
    let l = layout(cfg);
    Ok(Vocabs {
        vocab: io::load_json(&l.vocab(), "vocabulary (run `build-vocab`)")?,
        ingredients: io::load_json(&l.ingredients(), "ingredient vocabulary (run `build-vocab`)")?,
    })
}

fn encode(records: &[&RecipeRecord], v: &Vocabs) -> Result<Vec<EncodedRecipe>> {
    let mut out = Vec::with_capacity(records.len());
    let mut unknown = 0;
    for r in records {
        let e = EncodedRecipe::encode(r, &v.vocab, &v.ingredients)?;
        unknown += e.unknown_ingredients;
        out.push(e);
    }
    if unknown > 0 {
        warn!("{unknown} ingredient mentions are not in the ingredient vocabulary");
    }
    Ok(out)
}

/// Validates the corpus, writes the split manifest and builds the
/// vocabularies.
pub fn ingest(cfg: &RunConfig) -> Result<IngestSummary> {
    let l = layout(cfg);
    let records = io::load_corpus(&cfg.corpus)?;
    if records.is_empty() {
        return Err(stepcast_core::Error::EmptyCorpus.into());
    }
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let manifest = match &cfg.splits {
        Some(p) => io::load_splits(p)?,
        None => SplitManifest::from_ratio(&ids, cfg.split_ratio, cfg.seed)?,
    };
    manifest.validate(&ids)?;
    if manifest.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    io::write_json(&l.splits(), &manifest)?;
    let (vocab_size, ingredient_vocab_size, verbs) = build_vocabs(cfg)?;
    let summary = IngestSummary {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        recipes: records.len(),
        steps: records.iter().map(|r| r.steps.len()).sum(),
        with_segments: records.iter().filter(|r| r.segments.is_some()).count(),
        train: manifest.train.len(),
        validation: manifest.validation.len(),
        test: manifest.test.len(),
        vocab_size,
        ingredient_vocab_size,
        verbs,
    };
    io::write_json(&l.ingest_summary(), &summary)?;
    info!(
        "ingested {} recipes ({} train / {} validation / {} test)",
        summary.recipes, summary.train, summary.validation, summary.test
    );
    Ok(summary)
}

/// Builds word, ingredient and verb vocabularies from the training split.
pub fn build_vocabs(cfg: &RunConfig) -> Result<(usize, usize, usize)> {
    let l = layout(cfg);
    let records = io::load_corpus(&cfg.corpus)?;
    let manifest = load_split_manifest(cfg)?;
    let train: Vec<RecipeRecord> = select(&records, &manifest.train)?.into_iter().cloned().collect();
    let vocab = build_vocab(&train, cfg.vocab_max_size)?;
    let ingredients = build_ingredient_vocab(&train)?;
    let verbs = build_verb_lexicon(&train);
    io::write_json(&l.vocab(), &vocab)?;
    io::write_json(&l.ingredients(), &ingredients)?;
    io::write_json(&l.verbs(), &verbs)?;
    info!(
        "vocabulary {} tokens, {} ingredients, {} verbs",
        vocab.len(),
        ingredients.len(),
        verbs.selected.len()
    );
    Ok((vocab.len(), ingredients.len(), verbs.selected.len()))
}

fn checkpoint_extra(cfg: &RunConfig, stage: &str, epoch: usize) -> serde_json::Map<String, serde_json::Value> {
    let mut m = serde_json::Map::new();
    m.insert("train".into(), serde_json::to_value(cfg.train()).expect("serializable"));
    m.insert("stage".into(), stage.into());
    m.insert("epoch".into(), epoch.into());
    m.insert("config_hash".into(), cfg.hash().into());
    m
}

fn log_epoch(stats: &EpochStats, started: Instant) {
    info!(
        "{} epoch {}: loss {:.5} val {} sampled {}/{} ({:.1}s)",
        stats.stage,
        stats.epoch,
        stats.mean_loss,
        stats.val_loss.map_or("-".to_string(), |v| format!("{v:.5}")),
        stats.sampled_inputs,
        stats.sampled_inputs + stats.teacher_inputs,
        started.elapsed().as_secs_f64()
    );
}

fn finish_training(cfg: &RunConfig, stage: &str, params: &ModelParams, report: &TrainReport) -> Result<()> {
    let l = layout(cfg);
    let epochs = report.last().map_or(0, |e| e.epoch);
    checkpoint::save(&l.checkpoint(stage), params, cfg.seed, checkpoint_extra(cfg, stage, epochs))?;
    let path = l.train_report(stage);
    io::write_jsonl(&path, &report.epochs)?;
    artifacts::write_meta(&path, &Meta::new(&format!("train-{stage}"), cfg))
}

/// Stage one: trains the text model from a fresh seeded initialization.
pub fn train_text(cfg: &RunConfig) -> Result<TrainReport> {
    let l = layout(cfg);
    let v = load_vocabs(cfg)?;
    let records = io::load_corpus(&cfg.corpus)?;
    let manifest = load_split_manifest(cfg)?;
    let train = encode(&select(&records, &manifest.train)?, &v)?;
    let val = encode(&select(&records, &manifest.validation)?, &v)?;
    let params = ModelParams::init(cfg.model(v.vocab.len(), v.ingredients.len()), cfg.seed)?;
    let train_refs: Vec<&EncodedRecipe> = train.iter().collect();
    let val_refs: Vec<&EncodedRecipe> = val.iter().collect();
    let started = Instant::now();
    let mut saved: Result<()> = Ok(());
    let (params, report) = train::train_text(params, &train_refs, &val_refs, &cfg.train(), &mut |s, p| {
        log_epoch(s, started);
        if saved.is_ok() {
            saved = checkpoint::save(&l.epoch_checkpoint("text", s.epoch), p, cfg.seed, checkpoint_extra(cfg, "text", s.epoch));
        }
    })?;
    saved?;
    finish_training(cfg, "text", &params, &report)?;
    Ok(report)
}

fn load_checkpoint(stem: &Path) -> Result<ModelParams> {
    if !checkpoint::exists(stem) {
        return Err(Error::MissingArtifact {
            what: "checkpoint",
            path: checkpoint::paths(stem).0,
        });
    }
    Ok(checkpoint::load(stem)?.0)
}

/// Stage two: trains the video encoder against the frozen text model.
pub fn train_video(cfg: &RunConfig) -> Result<TrainReport> {
    let l = layout(cfg);
    let params = load_checkpoint(&l.checkpoint("text"))?;
    let v = load_vocabs(cfg)?;
    let records = io::load_corpus(&cfg.corpus)?;
    let manifest = load_split_manifest(cfg)?;
    let train = encode(&select(&records, &manifest.train)?, &v)?;
    let val = encode(&select(&records, &manifest.validation)?, &v)?;
    let skipped = train.iter().filter(|r| r.segments.is_none()).count();
    if skipped > 0 {
        warn!("{skipped} training recipes have no video segments and are skipped");
    }
    let train_refs: Vec<&EncodedRecipe> = train.iter().collect();
    let val_refs: Vec<&EncodedRecipe> = val.iter().collect();
    let started = Instant::now();
    let mut saved: Result<()> = Ok(());
    let (params, report) = train::train_video(params, &train_refs, &val_refs, &cfg.train(), &mut |s, p| {
        log_epoch(s, started);
        if saved.is_ok() {
            saved = checkpoint::save(&l.epoch_checkpoint("video", s.epoch), p, cfg.seed, checkpoint_extra(cfg, "video", s.epoch));
        }
    })?;
    saved?;
    finish_training(cfg, "video", &params, &report)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct PredictOptions {
    pub mode: Mode,
    /// Single context length; every length when `None`.
    pub context: Option<usize>,
    pub horizon: Option<usize>,
    pub split: SplitName,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Text,
            context: None,
            horizon: None,
            split: SplitName::Test,
            checkpoint: None,
            out: None,
        }
    }
}

/// Window mode: the recipe's segments are concatenated into one stream,
/// observation stops at the end of step `c` and the observed frames are
/// re-cut into fixed windows.
fn predict_windows(
    params: &ModelParams,
    vocab: &Vocabulary,
    recipe: &EncodedRecipe,
    cfg: &RunConfig,
    contexts: &[usize],
    horizon: usize,
) -> Result<PredictionSet> {
    let segs = recipe.segments.as_ref().ok_or_else(|| stepcast_core::Error::InvalidRecipe {
        id: recipe.id.clone(),
        reason: "no video segments".into(),
    })?;
    let stream: Vec<Vec<f32>> = segs.iter().flat_map(|s| s.frames().iter().cloned()).collect();
    let mut bounds = vec![0];
    for s in segs {
        bounds.push(bounds.last().expect("non-empty") + s.len());
    }
    let n = recipe.len();
    let mut cs: Vec<usize> = contexts.iter().copied().filter(|&c| c < n).collect();
    cs.sort_unstable();
    cs.dedup();
    let mut entries = Vec::new();
    for c in cs {
        let max_h = horizon.min(n - c);
        let (_, ids) = predict_from_video(params, &recipe.ingredients, &stream, &cfg.windowing(), bounds[c], max_h)?;
        for (h, tokens) in (1..=max_h).zip(ids) {
            entries.push(PredictionEntry {
                step: c + h,
                context_len: c,
                horizon: h,
                predicted: vocab.decode(&tokens),
                ground_truth: recipe.step_tokens[c + h - 1].clone(),
            });
        }
    }
    Ok(PredictionSet {
        recipe_id: recipe.id.clone(),
        entries,
    })
}

pub fn predict(cfg: &RunConfig, opts: &PredictOptions) -> Result<Vec<PredictionSet>> {
    let l = layout(cfg);
    let stem = opts.checkpoint.clone().unwrap_or_else(|| match opts.mode {
        Mode::Text => l.checkpoint("text"),
        Mode::Video | Mode::Window => l.checkpoint("video"),
    });
    let params = load_checkpoint(&stem)?;
    let v = load_vocabs(cfg)?;
    let records = io::load_corpus(&cfg.corpus)?;
    let manifest = load_split_manifest(cfg)?;
    let recipes = encode(&select(&records, &split_ids(&manifest, opts.split))?, &v)?;
    let horizon = match opts.horizon.unwrap_or(cfg.horizon) {
        0 => usize::MAX,
        h => h,
    };
    let sets: Vec<PredictionSet> = pool(cfg)?.install(|| {
        recipes
            .par_iter()
            .map(|r| {
                let contexts: Vec<usize> = match opts.context {
                    Some(c) => vec![c],
                    None => (0..r.len()).collect(),
                };
                match opts.mode {
                    Mode::Text => predict_recipe(&params, &v.vocab, r, Observe::Text, &contexts, horizon).map_err(Error::from),
                    Mode::Video => predict_recipe(&params, &v.vocab, r, Observe::Video, &contexts, horizon).map_err(Error::from),
                    Mode::Window => predict_windows(&params, &v.vocab, r, cfg, &contexts, horizon),
                }
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let path = opts.out.clone().unwrap_or_else(|| l.predictions());
    let rows = artifacts::prediction_rows(&sets);
    io::write_jsonl(&path, &rows)?;
    artifacts::write_meta(&path, &Meta::new("predict", cfg))?;
    info!("wrote {} predictions for {} recipes to {}", rows.len(), sets.len(), path.display());
    Ok(sets)
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    pub predictions: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub curves: Option<PathBuf>,
}

pub fn evaluate_predictions(cfg: &RunConfig, opts: &EvaluateOptions) -> Result<ReportFile> {
    let l = layout(cfg);
    let pred_path = opts.predictions.clone().unwrap_or_else(|| l.predictions());
    let rows = io::load_jsonl(&pred_path, "predictions (run `predict`)")?;
    let sets = artifacts::prediction_sets(rows);
    let ingredients: IngredientVocabulary = io::load_json(&l.ingredients(), "ingredient vocabulary (run `build-vocab`)")?;
    let lexicon: VerbLexicon = io::load_json(&l.verbs(), "verb lexicon (run `build-vocab`)")?;
    let report = evaluate(&sets, &IngredientMatcher::new(&ingredients), &lexicon, cfg.future_window);
    for (metric, value) in &report.next_step {
        info!("next-step {metric}: {value:.4}");
    }
    let curves_path = opts.curves.clone().unwrap_or_else(|| l.curves());
    io::write_file(&curves_path, artifacts::curves_csv(&report.curves).as_bytes())?;
    artifacts::write_meta(&curves_path, &Meta::new("evaluate", cfg))?;
    let file = ReportFile {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        future_window: cfg.future_window,
        report,
    };
    io::write_json(&opts.report.clone().unwrap_or_else(|| l.report()), &file)?;
    Ok(file)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOutcome {
    pub primitives: Vec<(&'static str, f64)>,
    pub full_loss: f64,
}

impl GradcheckOutcome {
    pub fn max_error(&self) -> f64 {
        self.primitives.iter().map(|p| p.1).fold(self.full_loss, f64::max)
    }
}

/// Finite-difference check of every primitive and of the full training loss
/// at tiny dims.
pub fn gradcheck(seed: u64) -> Result<GradcheckOutcome> {
    let primitives = check_primitives(seed, 6)?;
    let full_loss = train::check_gradients(seed)?;
    Ok(GradcheckOutcome { primitives, full_loss })
}

#[derive(Debug, Clone)]
pub struct ExportOptions {
    pub split: SplitName,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Recipe RNN state after every step of each recipe in the split.
pub fn export_embeddings(cfg: &RunConfig, opts: &ExportOptions) -> Result<Vec<artifacts::EmbeddingRow>> {
    let l = layout(cfg);
    let params = load_checkpoint(&opts.checkpoint.clone().unwrap_or_else(|| l.checkpoint("text")))?;
    let v = load_vocabs(cfg)?;
    let records = io::load_corpus(&cfg.corpus)?;
    let manifest = load_split_manifest(cfg)?;
    let chosen = select(&records, &split_ids(&manifest, opts.split))?;
    let encoded = encode(&chosen, &v)?;
    let rows: Vec<artifacts::EmbeddingRow> = pool(cfg)?.install(|| {
        chosen
            .par_iter()
            .zip(encoded.par_iter())
            .map(|(rec, enc)| {
                let ctx: Vec<Context<'_>> = enc.steps.iter().map(|s| Context::Text(s)).collect();
                Ok(artifacts::EmbeddingRow {
                    id: rec.id.clone(),
                    category: rec.category.clone(),
                    vec: recipe_embedding(&params, &enc.ingredients, &ctx)?,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let path = opts.out.clone().unwrap_or_else(|| l.embeddings());
    io::write_jsonl(&path, &rows)?;
    artifacts::write_meta(&path, &Meta::new("export-embeddings", cfg))?;
    info!("wrote {} embeddings to {}", rows.len(), path.display());
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub kind: SynthKind,
    pub recipes: usize,
    pub steps: usize,
    /// Feature dimension of attached video segments; 0 attaches none.
    pub feature_dim: usize,
    pub frames: usize,
    pub noise: f32,
    pub out: PathBuf,
    /// Also write a split manifest here (templated corpora hold out unseen
    /// ingredient combinations as the test split).
    pub splits: Option<PathBuf>,
}

/// Writes a seeded synthetic corpus.
pub fn synth(cfg: &RunConfig, opts: &SynthOptions) -> Result<usize> {
    let (mut records, test_ids) = match opts.kind {
        SynthKind::Random => (synthetic::random_recipes(opts.recipes, opts.steps, cfg.seed), Vec::new()),
        SynthKind::Templated => {
            let (train, test) = synthetic::templated_recipes(cfg.seed);
            let ids: Vec<String> = test.iter().map(|r| r.id.clone()).collect();
            (train.into_iter().chain(test).collect(), ids)
        }
    };
    if opts.feature_dim > 0 {
        synthetic::attach_features(&mut records, opts.frames, opts.feature_dim, opts.noise, cfg.seed);
    }
    io::write_corpus(&opts.out, &records)?;
    if let Some(path) = &opts.splits {
        let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        let manifest = if test_ids.is_empty() {
            SplitManifest::from_ratio(&ids, cfg.split_ratio, cfg.seed)?
        } else {
            SplitManifest {
                train: ids.iter().filter(|id| !test_ids.contains(id)).cloned().collect(),
                validation: Vec::new(),
                test: test_ids,
                ratio: None,
            }
        };
        io::write_json(path, &manifest)?;
    }
    Ok(records.len())
}
