//! One pre-finetuned encoder per power-set config, trained once and cached
//! on disk for every downstream trial that uses it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plan::CorpusConfig;
use crate::data::Corpus;
use crate::kernel::{read_checkpoint, write_checkpoint, CheckpointMeta, ModelState};
use crate::sampler::hex_digest;
use crate::training::{prefinetune, PrefinetuneSpec};
use crate::{Error, Result};

pub const CHECKPOINT_MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub config_id: usize,
    pub corpora: Vec<String>,
    /// File name inside the checkpoint directory.
    pub file: String,
    pub config_hash: String,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub entries: Vec<CheckpointEntry>,
}

impl CheckpointManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CHECKPOINT_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format("checkpoint manifest", &path, e.to_string()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(CHECKPOINT_MANIFEST);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn entry(&self, config_id: usize) -> Option<&CheckpointEntry> {
        self.entries.iter().find(|e| e.config_id == config_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefinetuneSummary {
    pub manifest: CheckpointManifest,
    pub trained: Vec<usize>,
    pub skipped: Vec<usize>,
}

pub fn checkpoint_file(config_id: usize) -> String {
    format!("config-{config_id:02}.ckpt")
}

pub fn spec_for(template: &PrefinetuneSpec, config: &CorpusConfig) -> PrefinetuneSpec {
    PrefinetuneSpec {
        config_id: config.config_id,
        corpus_set: config.corpora.clone(),
        ..template.clone()
    }
}

/// Digest of the pre-finetuning spec a checkpoint was trained from and of
/// the content of the corpora it selects.
pub fn spec_hash(spec: &PrefinetuneSpec, corpora: &[Corpus]) -> String {
    let mut bytes = serde_json::to_vec(spec).expect("spec serialises");
    for c in corpora.iter().filter(|c| spec.corpus_set.iter().any(|n| n == c.name())) {
        bytes.extend_from_slice(c.fingerprint().as_bytes());
    }
    hex_digest(&bytes)
}

/// Pre-finetunes every config whose checkpoint is missing or was produced
/// from a different spec, in parallel, and writes the manifest.
pub fn prefinetune_all(
    configs: &[CorpusConfig],
    corpora: &[Corpus],
    template: &PrefinetuneSpec,
    dir: &Path,
    parallelism: usize,
) -> Result<PrefinetuneSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let previous = CheckpointManifest::load(dir).unwrap_or_default();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results: Vec<Result<(CheckpointEntry, bool)>> = pool.install(|| {
        configs
            .par_iter()
            .map(|config| {
                let spec = spec_for(template, config);
                let hash = spec_hash(&spec, corpora);
                let file = checkpoint_file(config.config_id);
                let path = dir.join(&file);
                if let Some(prev) = previous.entry(config.config_id) {
                    let reusable = prev.config_hash == hash
                        && read_checkpoint(&path).is_ok_and(|(_, meta)| meta.config_hash == hash);
                    if reusable {
                        return Ok((prev.clone(), false));
                    }
                }
                let (model, state) = prefinetune(&spec, corpora)?;
                let meta = CheckpointMeta {
                    seed: spec.seed,
                    config_hash: hash.clone(),
                };
                write_checkpoint(&path, &model, &meta)?;
                info!(
                    "config {:>2} [{}]: {} epochs, best epoch {}",
                    config.config_id,
                    config.label(),
                    state.epochs_run,
                    state.best_epoch
                );
                Ok((
                    CheckpointEntry {
                        config_id: config.config_id,
                        corpora: config.corpora.clone(),
                        file,
                        config_hash: hash,
                        epochs_run: state.epochs_run,
                        best_epoch: state.best_epoch,
                    },
                    true,
                ))
            })
            .collect()
    });
    let mut summary = PrefinetuneSummary {
        manifest: CheckpointManifest::default(),
        trained: Vec::new(),
        skipped: Vec::new(),
    };
    for r in results {
        let (entry, trained) = r?;
        if trained {
            summary.trained.push(entry.config_id);
        } else {
            summary.skipped.push(entry.config_id);
        }
        summary.manifest.entries.push(entry);
    }
    summary.manifest.save(dir)?;
    Ok(summary)
}

/// Checks that the manifest in `dir` holds a checkpoint for every config,
/// trained on the same corpus subset, with the same spec, on the same data.
pub fn verify_checkpoints(
    dir: &Path,
    configs: &[CorpusConfig],
    corpora: &[Corpus],
    template: &PrefinetuneSpec,
) -> Result<()> {
    let manifest = if dir.join(CHECKPOINT_MANIFEST).exists() {
        CheckpointManifest::load(dir)?
    } else {
        CheckpointManifest::default()
    };
    for config in configs {
        let entry = manifest.entry(config.config_id).ok_or_else(|| Error::MissingCheckpoint {
            config_id: config.config_id,
            path: dir.join(checkpoint_file(config.config_id)),
        })?;
        if entry.corpora != config.corpora {
            return Err(Error::CheckpointMismatch {
                config_id: config.config_id,
                reason: format!("trained on [{}], plan expects [{}]", entry.corpora.join("+"), config.label()),
            });
        }
        if entry.config_hash != spec_hash(&spec_for(template, config), corpora) {
            return Err(Error::CheckpointMismatch {
                config_id: config.config_id,
                reason: "trained with different pre-finetuning settings or data (rerun prefinetune)".into(),
            });
        }
    }
    Ok(())
}

/// Loads the checkpoints of `config_ids` from a checkpoint directory.
pub fn load_models(dir: &Path, config_ids: impl IntoIterator<Item = usize>) -> Result<BTreeMap<usize, ModelState>> {
    let manifest = CheckpointManifest::load(dir).ok();
    config_ids
        .into_iter()
        .map(|id| {
            let path: PathBuf = manifest
                .as_ref()
                .and_then(|m| m.entry(id))
                .map(|e| dir.join(&e.file))
                .unwrap_or_else(|| dir.join(checkpoint_file(id)));
            if !path.exists() {
                return Err(Error::MissingCheckpoint { config_id: id, path });
            }
            let (model, _) = read_checkpoint(&path)?;
            Ok((id, model))
        })
        .collect()
}
