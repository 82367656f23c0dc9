//! Checkpoints: a JSON manifest plus one little-endian binary blob holding
//! every parameter tensor in manifest order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stepcast_core::model::{ModelConfig, ModelParams};
use stepcast_core::numerics::{ParamSet, Tensor};

use crate::error::{Error, Result};
use crate::io;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: u64,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub model: ModelConfig,
    #[serde(default)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub params: Vec<ParamEntry>,
    pub hyperparams: Hyperparams,
    pub rng_seed: u64,
}

/// Paths of the manifest and blob for a checkpoint stem such as
/// `checkpoints/text`.
pub fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (io::with_suffix(stem, ".json"), io::with_suffix(stem, ".bin"))
}

pub fn exists(stem: &Path) -> bool {
    let (m, b) = paths(stem);
    m.is_file() && b.is_file()
}

/// Serializes parameters as f64.
pub fn encode(params: &ModelParams, seed: u64, extra: serde_json::Map<String, serde_json::Value>) -> (Manifest, Vec<u8>) {
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(params.params.len());
    for (name, t) in params.params.iter() {
        entries.push(ParamEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: blob.len() as u64,
            dtype: "f64".into(),
        });
        for x in t.data() {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    }
    let manifest = Manifest {
        version: CHECKPOINT_VERSION,
        params: entries,
        hyperparams: Hyperparams {
            model: params.config.clone(),
            extra,
        },
        rng_seed: seed,
    };
    (manifest, blob)
}

/// Rebuilds parameters from a manifest and blob. Accepts `f64` and `f32`
/// tensors.
pub fn decode(manifest: &Manifest, blob: &[u8]) -> std::result::Result<ModelParams, String> {
    if manifest.version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {}", manifest.version));
    }
    let mut set = ParamSet::new();
    for p in &manifest.params {
        let n: usize = p.shape.iter().product();
        let width = match p.dtype.as_str() {
            "f64" => 8,
            "f32" => 4,
            other => return Err(format!("{}: unsupported dtype {other}", p.name)),
        };
        let start = usize::try_from(p.offset).map_err(|_| format!("{}: offset too large", p.name))?;
        let end = start + n * width;
        let bytes = blob
            .get(start..end)
            .ok_or_else(|| format!("{}: blob too short ({} bytes, need {end})", p.name, blob.len()))?;
        let data: Vec<f64> = if width == 8 {
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
        } else {
            bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect()
        };
        let t = Tensor::new(p.shape.clone(), data).map_err(|e| format!("{}: {e}", p.name))?;
        set.insert(p.name.clone(), t);
    }
    ModelParams::from_params(manifest.hyperparams.model.clone(), set).map_err(|e| e.to_string())
}

pub fn save(
    stem: &Path,
    params: &ModelParams,
    seed: u64,
    extra: serde_json::Map<String, serde_json::Value>,
) -> Result<()> {
    let (manifest, blob) = encode(params, seed, extra);
    let (mpath, bpath) = paths(stem);
    io::write_file(&bpath, &blob)?;
    io::write_json(&mpath, &manifest)
}

pub fn load(stem: &Path) -> Result<(ModelParams, Manifest)> {
    let (mpath, bpath) = paths(stem);
    let manifest: Manifest = io::load_json(&mpath, "checkpoint")?;
    let blob = io::read_bytes(&bpath, "checkpoint blob")?;
    let params = decode(&manifest, &blob).map_err(|reason| Error::format(&bpath, reason))?;
    Ok((params, manifest))
}
