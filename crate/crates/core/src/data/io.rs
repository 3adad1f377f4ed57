//! Corpus directories: a TOML `manifest` and a binary `features` file.
//!
//! `features` layout: magic `PFTFEAT1`, `u32` row count, `u32` dim, then
//! row-major little-endian `f64` values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, LabelSpace, Language, Split, Utterance};
use crate::kernel::Vector;
use crate::{Error, Result};

pub const FEATURES_MAGIC: &[u8; 8] = b"PFTFEAT1";
pub const MANIFEST_FILE: &str = "manifest";
pub const FEATURES_FILE: &str = "features";
const MANIFEST_FORMAT: &str = "prefinetune-corpus-v1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitCounts {
    train: usize,
    validation: usize,
    test: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    speaker: String,
    language: Language,
    label: usize,
    split: Split,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    name: String,
    dim: usize,
    labels: Vec<String>,
    splits: SplitCounts,
    utterance: Vec<Row>,
}

pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        name: corpus.name().into(),
        dim: corpus.dim(),
        labels: corpus.label_space().names().to_vec(),
        splits: SplitCounts {
            train: corpus.split_len(Split::Train),
            validation: corpus.split_len(Split::Validation),
            test: corpus.split_len(Split::Test),
        },
        utterance: corpus
            .utterances()
            .iter()
            .map(|u| Row {
                speaker: u.speaker_id.clone(),
                language: u.language,
                label: u.label,
                split: u.split,
            })
            .collect(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::format("manifest", dir, e.to_string()))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;

    let n = corpus.utterances().len();
    let mut bytes = Vec::with_capacity(16 + n * corpus.dim() * 8);
    bytes.extend_from_slice(FEATURES_MAGIC);
    bytes.extend_from_slice(&(n as u32).to_le_bytes());
    bytes.extend_from_slice(&(corpus.dim() as u32).to_le_bytes());
    for u in corpus.utterances() {
        for v in u.features.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let features_path = dir.join(FEATURES_FILE);
    fs::write(&features_path, bytes).map_err(|e| Error::io(&features_path, e))
}

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::format("manifest", &manifest_path, e.to_string()))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(Error::format(
            "manifest",
            &manifest_path,
            format!("unsupported format `{}`", manifest.format),
        ));
    }
    let label_space = LabelSpace::new(manifest.labels)?;
    if let Some(row) = manifest.utterance.iter().find(|r| r.label >= label_space.len()) {
        return Err(Error::LabelOutOfRange {
            label: row.label,
            n_labels: label_space.len(),
        });
    }

    let features_path = dir.join(FEATURES_FILE);
    let bytes = fs::read(&features_path).map_err(|e| Error::io(&features_path, e))?;
    let bad = |reason: String| Error::format("features file", &features_path, reason);
    if bytes.len() < 16 || &bytes[..8] != FEATURES_MAGIC {
        return Err(bad("missing magic bytes or header".into()));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if count != manifest.utterance.len() {
        return Err(bad(format!(
            "expected {} rows (from manifest), found {count} in header",
            manifest.utterance.len()
        )));
    }
    if dim != manifest.dim {
        return Err(bad(format!("expected dim {}, found {dim}", manifest.dim)));
    }
    let payload = &bytes[16..];
    let expected = count * dim;
    if payload.len() != expected * 8 {
        return Err(bad(format!(
            "expected {expected} values ({count} x {dim}), found {} bytes = {} values",
            payload.len(),
            payload.len() / 8
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let utterances = manifest
        .utterance
        .into_iter()
        .zip(values.chunks_exact(dim.max(1)))
        .map(|(row, feats)| {
            Ok(Utterance {
                features: Vector::new(feats.to_vec())?,
                label: row.label,
                speaker_id: row.speaker,
                language: row.language,
                split: row.split,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(manifest.name, label_space, manifest.dim, utterances)
}
