//! On-disk formats: JSON-lines corpora, binary feature segments and split
//! manifests.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stepcast_core::corpus::{FeatureSegment, RecipeRecord, SplitManifest};

use crate::error::{Error, Result};

pub const FSEG_MAGIC: &[u8; 4] = b"FSEG";
pub const FSEG_VERSION: u32 = 1;
const FSEG_HEADER: usize = 16;

#[derive(Debug, Serialize, Deserialize)]
struct CorpusLine {
    #[serde(flatten)]
    record: RecipeRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segment_files: Option<Vec<String>>,
}

pub fn read_bytes(path: &Path, what: &'static str) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact {
            what,
            path: path.to_path_buf(),
        },
        _ => Error::io(path, e),
    })
}

pub fn read_text(path: &Path, what: &'static str) -> Result<String> {
    let bytes = read_bytes(path, what)?;
    String::from_utf8(bytes).map_err(|_| Error::format(path, "not valid UTF-8"))
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Loads a JSON-lines corpus. Segment files are resolved relative to the
/// corpus file's directory. Blank lines are skipped.
pub fn load_corpus(path: &Path) -> Result<Vec<RecipeRecord>> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact {
            what: "corpus",
            path: path.to_path_buf(),
        },
        _ => Error::io(path, e),
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |reason: String| Error::Line {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let parsed: CorpusLine =
            serde_json::from_str(&line).map_err(|e| at(format!("recipe {}: {e}", out.len())))?;
        let mut record = parsed.record;
        if let Some(files) = parsed.segment_files {
            let mut segs = Vec::with_capacity(files.len());
            for f in &files {
                segs.push(load_features(&base.join(f)).map_err(|e| at(format!("recipe {}: {e}", record.id)))?);
            }
            if let Some(dim) = segs.first().map(FeatureSegment::dim) {
                if let Some(j) = segs.iter().position(|s| s.dim() != dim) {
                    return Err(at(format!(
                        "recipe {}: segment {} has dim {}, expected {dim}",
                        record.id,
                        j + 1,
                        segs[j].dim()
                    )));
                }
            }
            record.segments = Some(segs);
        }
        record.validate().map_err(|e| at(format!("recipe {}: {e}", out.len())))?;
        out.push(record);
    }
    Ok(out)
}

/// Writes a corpus as JSON lines. Recipes carrying segments get one FSEG
/// file each per step in `<corpus stem>_segments/`, referenced relatively.
pub fn write_corpus(path: &Path, records: &[RecipeRecord]) -> Result<()> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus");
    let seg_dir = format!("{stem}_segments");
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut text = String::new();
    for r in records {
        let segment_files = match &r.segments {
            Some(segs) => {
                let mut names = Vec::with_capacity(segs.len());
                for (j, s) in segs.iter().enumerate() {
                    let name = format!("{seg_dir}/{}_{:03}.fseg", sanitize(&r.id), j + 1);
                    write_features(&base.join(&name), s)?;
                    names.push(name);
                }
                Some(names)
            }
            None => None,
        };
        let line = CorpusLine {
            record: r.clone(),
            segment_files,
        };
        text.push_str(&serde_json::to_string(&line).expect("serializable"));
        text.push('\n');
    }
    write_file(path, text.as_bytes())
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn encode_features(seg: &FeatureSegment) -> Vec<u8> {
    let mut out = Vec::with_capacity(FSEG_HEADER + seg.len() * seg.dim() * 4);
    out.extend_from_slice(FSEG_MAGIC);
    out.extend_from_slice(&FSEG_VERSION.to_le_bytes());
    out.extend_from_slice(&(seg.len() as u32).to_le_bytes());
    out.extend_from_slice(&(seg.dim() as u32).to_le_bytes());
    for frame in seg.frames() {
        for x in frame {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// Parses an FSEG buffer. Errors are plain messages naming the offset.
pub fn decode_features(bytes: &[u8]) -> std::result::Result<FeatureSegment, String> {
    if bytes.len() < FSEG_HEADER {
        return Err(format!("truncated header: {} bytes", bytes.len()));
    }
    if &bytes[..4] != FSEG_MAGIC {
        return Err("bad magic at offset 0".into());
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != FSEG_VERSION {
        return Err(format!("unsupported version {version} at offset 4"));
    }
    let (frames, dim) = (word(8) as usize, word(12) as usize);
    if frames == 0 || dim == 0 {
        return Err(format!("empty segment ({frames} frames of dim {dim})"));
    }
    let need = frames
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| "header sizes overflow".to_string())?;
    let payload = &bytes[FSEG_HEADER..];
    if payload.len() < need {
        return Err(format!("truncated payload: expected {need} bytes, found {}", payload.len()));
    }
    if payload.len() > need {
        return Err(format!("trailing data at offset {}", FSEG_HEADER + need));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    FeatureSegment::new(values.chunks(dim).map(<[f32]>::to_vec).collect()).map_err(|e| e.to_string())
}

pub fn load_features(path: &Path) -> Result<FeatureSegment> {
    let bytes = read_bytes(path, "feature segment")?;
    decode_features(&bytes).map_err(|reason| Error::format(path, reason))
}

pub fn write_features(path: &Path, seg: &FeatureSegment) -> Result<()> {
    write_file(path, &encode_features(seg))
}

pub fn load_splits(path: &Path) -> Result<SplitManifest> {
    let text = read_text(path, "split manifest")?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads any JSON artifact.
pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &'static str) -> Result<T> {
    let text = read_text(path, what)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Writes one compact JSON value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, &row).expect("serializable");
        buf.write_all(b"\n").expect("in-memory write");
    }
    write_file(path, &buf)
}

pub fn load_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, what: &'static str) -> Result<Vec<T>> {
    let text = read_text(path, what)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Line {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// `path` with `suffix` appended to its file name.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
