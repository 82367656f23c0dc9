//! Run configuration: one flat TOML file plus `--key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stepcast_core::infer::WindowingConfig;
use stepcast_core::model::ModelConfig;
use stepcast_core::train::TrainConfig;

use crate::error::{Error, Result};
use crate::io;

/// Every setting a command may read. Unset keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// JSON-lines corpus.
    pub corpus: PathBuf,
    /// Existing split manifest; generated from `split_ratio` when unset.
    pub splits: Option<PathBuf>,
    /// Directory holding every artifact of a run.
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Worker threads for prediction and embedding export.
    pub jobs: usize,
    pub split_ratio: [u32; 3],
    pub vocab_max_size: usize,

    pub embed_dim: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub vid_hidden: usize,
    pub recipe_hidden: usize,
    pub feature_dim: usize,
    pub max_decode_len: usize,
    pub use_ingredients: bool,

    pub batch_size_recipes: usize,
    pub lr: f64,
    pub text_epochs: usize,
    pub video_epochs: usize,
    pub scheduled_sampling_prob: f64,
    pub scheduled_sampling_start_epoch: usize,
    pub clip_norm: f64,

    pub window_size: usize,
    pub frame_stride: usize,

    /// Deepest horizon predicted; 0 predicts every remaining step.
    pub horizon: usize,
    /// Steps considered by max-future-match scoring.
    pub future_window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let w = WindowingConfig::default();
        Self {
            corpus: PathBuf::from("corpus.jsonl"),
            splits: None,
            out_dir: PathBuf::from("run"),
            seed: 0,
            jobs: 1,
            split_ratio: [8, 1, 1],
            vocab_max_size: 30_000,
            embed_dim: 256,
            enc_hidden: 512,
            dec_hidden: 512,
            vid_hidden: 512,
            recipe_hidden: 1024,
            feature_dim: 2048,
            max_decode_len: 20,
            use_ingredients: true,
            batch_size_recipes: t.batch_size_recipes,
            lr: t.lr,
            text_epochs: t.text_epochs,
            video_epochs: t.video_epochs,
            scheduled_sampling_prob: t.scheduled_sampling_prob,
            scheduled_sampling_start_epoch: t.scheduled_sampling_start_epoch,
            clip_norm: t.clip_norm,
            window_size: w.window_size,
            frame_stride: w.frame_stride,
            horizon: 0,
            future_window: 3,
        }
    }
}

/// Keys that only locate files or tune parallelism; they are left out of
/// the config hash.
const UNHASHED: &[&str] = &["corpus", "splits", "out_dir", "jobs"];

pub fn known_keys() -> Vec<String> {
    match serde_json::to_value(RunConfig::default()).expect("serializable") {
        serde_json::Value::Object(map) => map.keys().cloned().collect(),
        _ => unreachable!("struct serializes to an object"),
    }
}

/// Parses an override value as a TOML literal, falling back to a bare
/// string (so `--corpus=data/x.jsonl` needs no quotes).
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Splits `--key=value` arguments naming config keys out of `args`.
/// Everything else is returned untouched for the argument parser.
pub fn extract_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let keys = known_keys();
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    for a in args {
        if let Some((k, v)) = a.strip_prefix("--").and_then(|s| s.split_once('=')) {
            let key = k.replace('-', "_");
            if keys.contains(&key) {
                overrides.push((key, v.to_string()));
                continue;
            }
        }
        rest.push(a);
    }
    (rest, overrides)
}

impl RunConfig {
    /// Parses TOML text and applies overrides in order.
    pub fn from_toml(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        for (k, v) in overrides {
            table.insert(k.clone(), parse_value(v));
        }
        let keys = known_keys();
        for (k, v) in &table {
            if !keys.contains(k) {
                return Err(Error::ConfigKey {
                    key: k.clone(),
                    reason: "unknown key".into(),
                });
            }
            let mut single = toml::Table::new();
            single.insert(k.clone(), v.clone());
            if let Err(e) = toml::Value::Table(single).try_into::<RunConfig>() {
                return Err(Error::ConfigKey {
                    key: k.clone(),
                    reason: e.message().trim().to_string(),
                });
            }
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (or the defaults when `None`) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => io::read_text(p, "config file").map_err(|e| match e {
                Error::MissingArtifact { path, .. } => Error::Config(format!("no such file {}", path.display())),
                other => other,
            })?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let key = |key: &str, reason: &str| Error::ConfigKey {
            key: key.into(),
            reason: reason.into(),
        };
        if self.jobs == 0 {
            return Err(key("jobs", "must be at least 1"));
        }
        if self.split_ratio.iter().sum::<u32>() == 0 {
            return Err(key("split_ratio", "must not sum to zero"));
        }
        if self.vocab_max_size < 5 {
            return Err(key("vocab_max_size", "must be at least 5"));
        }
        if self.window_size == 0 {
            return Err(key("window_size", "must be positive"));
        }
        if self.frame_stride == 0 {
            return Err(key("frame_stride", "must be positive"));
        }
        if self.future_window == 0 {
            return Err(key("future_window", "must be positive"));
        }
        self.train().validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("serializable")
    }

    /// SHA-256 over the canonical JSON of every result-affecting key.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("serializable");
        if let serde_json::Value::Object(map) = &mut value {
            for k in UNHASHED {
                map.remove(*k);
            }
        }
        let canonical = serde_json::to_string(&value).expect("serializable");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn model(&self, vocab_size: usize, ingredient_vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            ingredient_vocab_size,
            embed_dim: self.embed_dim,
            enc_hidden: self.enc_hidden,
            dec_hidden: self.dec_hidden,
            vid_hidden: self.vid_hidden,
            recipe_hidden: self.recipe_hidden,
            feature_dim: self.feature_dim,
            max_decode_len: self.max_decode_len,
            use_ingredients: self.use_ingredients,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            batch_size_recipes: self.batch_size_recipes,
            lr: self.lr,
            text_epochs: self.text_epochs,
            video_epochs: self.video_epochs,
            scheduled_sampling_prob: self.scheduled_sampling_prob,
            scheduled_sampling_start_epoch: self.scheduled_sampling_start_epoch,
            clip_norm: self.clip_norm,
            seed: self.seed,
        }
    }

    pub fn windowing(&self) -> WindowingConfig {
        WindowingConfig {
            window_size: self.window_size,
            frame_stride: self.frame_stride,
        }
    }
}
