//! Result files written by the commands and their `.meta.json` sidecars.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stepcast_core::infer::{PredictionEntry, PredictionSet};
use stepcast_core::metrics::{EvaluationReport, StepCurve};

use crate::config::RunConfig;
use crate::error::Result;
use crate::io;

/// Provenance attached to every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Meta {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
        }
    }
}

pub fn meta_path(artifact: &Path) -> PathBuf {
    io::with_suffix(artifact, ".meta.json")
}

pub fn write_meta(artifact: &Path, meta: &Meta) -> Result<()> {
    io::write_json(&meta_path(artifact), meta)
}

/// File locations inside a run directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn splits(&self) -> PathBuf {
        self.root.join("splits.json")
    }
    pub fn ingest_summary(&self) -> PathBuf {
        self.root.join("ingest.json")
    }
    pub fn vocab(&self) -> PathBuf {
        self.root.join("vocab.json")
    }
    pub fn ingredients(&self) -> PathBuf {
        self.root.join("ingredients.json")
    }
    pub fn verbs(&self) -> PathBuf {
        self.root.join("verbs.json")
    }
    pub fn checkpoint(&self, stage: &str) -> PathBuf {
        self.root.join("checkpoints").join(stage)
    }
    pub fn epoch_checkpoint(&self, stage: &str, epoch: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("{stage}-epoch-{epoch:03}"))
    }
    pub fn train_report(&self, stage: &str) -> PathBuf {
        self.root.join(format!("train_{stage}.jsonl"))
    }
    pub fn predictions(&self) -> PathBuf {
        self.root.join("predictions.jsonl")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
    pub fn curves(&self) -> PathBuf {
        self.root.join("curves.csv")
    }
    pub fn embeddings(&self) -> PathBuf {
        self.root.join("embeddings.jsonl")
    }
}

/// One prediction line; token lists are joined with single spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub step: usize,
    pub context_len: usize,
    pub horizon: usize,
    pub pred: String,
    pub gt: String,
}

pub fn prediction_rows(sets: &[PredictionSet]) -> Vec<PredictionRow> {
    sets.iter()
        .flat_map(|s| {
            s.entries.iter().map(|e| PredictionRow {
                id: s.recipe_id.clone(),
                step: e.step,
                context_len: e.context_len,
                horizon: e.horizon,
                pred: e.predicted.join(" "),
                gt: e.ground_truth.join(" "),
            })
        })
        .collect()
}

/// Groups rows back into per-recipe sets in order of first appearance.
pub fn prediction_sets(rows: Vec<PredictionRow>) -> Vec<PredictionSet> {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, Vec<PredictionEntry>> = BTreeMap::new();
    for r in rows {
        let split = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        let entry = PredictionEntry {
            step: r.step,
            context_len: r.context_len,
            horizon: r.horizon,
            predicted: split(&r.pred),
            ground_truth: split(&r.gt),
        };
        if !by_id.contains_key(&r.id) {
            order.push(r.id.clone());
        }
        by_id.entry(r.id).or_default().push(entry);
    }
    order
        .into_iter()
        .map(|id| {
            let entries = by_id.remove(&id).expect("grouped");
            PredictionSet { recipe_id: id, entries }
        })
        .collect()
}

/// Evaluation report file: provenance plus the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub seed: u64,
    pub config_hash: String,
    pub future_window: usize,
    #[serde(flatten)]
    pub report: EvaluationReport,
}

/// `metric,context_len,step,mean,support` rows for every curve cell.
pub fn curves_csv(curves: &[StepCurve]) -> String {
    let mut out = String::from("metric,context_len,step,mean,support\n");
    for c in curves {
        for cell in &c.cells {
            writeln!(out, "{},{},{},{},{}", c.metric, cell.context_len, cell.step, cell.mean, cell.support)
                .expect("string write");
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub vec: Vec<f64>,
}

/// Summary written by `ingest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub seed: u64,
    pub config_hash: String,
    pub recipes: usize,
    pub steps: usize,
    pub with_segments: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub vocab_size: usize,
    pub ingredient_vocab_size: usize,
    pub verbs: usize,
}
