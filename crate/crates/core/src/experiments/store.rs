//! Append-only results store and plan files.
//!
//! One JSON object per line followed by a tab and `#<digest>` of the JSON
//! text. Lines whose digest does not match (for example a line cut short by
//! a crash) are dropped on load. The first line is a header carrying the
//! run hash (see `store_hash`).

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::plan::{CorpusConfig, GridPlan, TrialKey, TrialSpec};
use crate::data::Language;
use crate::sampler::hex_digest;
use crate::{Error, Result};

const STORE_FORMAT: &str = "prefinetune-store-v1";
const PLAN_FORMAT: &str = "prefinetune-plan-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config_id: usize,
    pub speaker: String,
    pub emotion: String,
    pub k: usize,
    pub trial_index: usize,
    pub seed: u64,
    pub corpora: Vec<String>,
    pub language: Language,
    pub status: TrialStatus,
    pub macro_f1: Option<f64>,
    pub per_class_f1: Option<[f64; 2]>,
    pub baseline_f1: Option<f64>,
    pub epochs: usize,
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn spec(&self) -> TrialSpec {
        TrialSpec {
            config_id: self.config_id,
            speaker: self.speaker.clone(),
            emotion: self.emotion.clone(),
            k: self.k,
            trial_index: self.trial_index,
            seed: self.seed,
        }
    }

    pub fn key(&self) -> TrialKey {
        self.spec().key()
    }

    pub fn is_ok(&self) -> bool {
        self.status == TrialStatus::Ok
    }

    /// Macro F1 of an ok record.
    pub fn f1(&self) -> Option<f64> {
        if self.is_ok() {
            self.macro_f1
        } else {
            None
        }
    }

    /// Copy with wall time zeroed, for comparing runs.
    pub fn without_timing(&self) -> TrialRecord {
        TrialRecord {
            wall_ms: 0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    run_hash: String,
}

pub(crate) fn encode_line<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("record serialises");
    let digest = hex_digest(json.as_bytes());
    format!("{json}\t#{digest}\n")
}

fn decode_line<T: DeserializeOwned>(line: &str) -> Option<T> {
    let (json, digest) = line.rsplit_once("\t#")?;
    if hex_digest(json.as_bytes()) != digest {
        return None;
    }
    serde_json::from_str(json).ok()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreSnapshot {
    pub run_hash: Option<String>,
    pub records: Vec<TrialRecord>,
    pub discarded_lines: usize,
}

impl StoreSnapshot {
    pub fn ok_records(&self) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(|r| r.is_ok())
    }

    pub fn failed_records(&self) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(|r| !r.is_ok())
    }
}

/// Reads a store; a missing file is an empty store. Duplicate keys keep the
/// first record.
pub fn load_store(path: &Path) -> Result<StoreSnapshot> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(StoreSnapshot::default()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut snap = StoreSnapshot::default();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        if i == 0 {
            if let Some(h) = decode_line::<Header>(line) {
                if h.format != STORE_FORMAT {
                    return Err(Error::format("results store", path, format!("unknown format `{}`", h.format)));
                }
                snap.run_hash = Some(h.run_hash);
                continue;
            }
        }
        match decode_line::<TrialRecord>(line) {
            Some(r) => {
                if seen.insert(r.key()) {
                    snap.records.push(r);
                }
            }
            None => snap.discarded_lines += 1,
        }
    }
    Ok(snap)
}

/// The single writer of a results store.
pub struct StoreWriter {
    path: PathBuf,
    file: File,
}

impl StoreWriter {
    /// Opens (or creates) a store for `run_hash`. Fails if the store was
    /// written for a different run. A trailing partial line is terminated
    /// so the next append starts on a fresh line.
    pub fn open(path: &Path, run_hash: &str) -> Result<(StoreWriter, StoreSnapshot)> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let snap = load_store(path)?;
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        match &snap.run_hash {
            Some(h) if h != run_hash => {
                return Err(Error::StoreMismatch {
                    store: h.clone(),
                    current: run_hash.to_string(),
                })
            }
            Some(_) => {}
            None if len == 0 => {
                let header = Header {
                    format: STORE_FORMAT.into(),
                    run_hash: run_hash.into(),
                };
                file.write_all(encode_line(&header).as_bytes())
                    .map_err(|e| Error::io(path, e))?;
            }
            None => {
                return Err(Error::format("results store", path, "missing header line"));
            }
        }
        if len > 0 {
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1)).map_err(|e| Error::io(path, e))?;
            file.read_exact(&mut last).map_err(|e| Error::io(path, e))?;
            if last[0] != b'\n' {
                file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
        }
        Ok((
            StoreWriter {
                path: path.to_path_buf(),
                file,
            },
            snap,
        ))
    }

    pub fn append(&mut self, record: &TrialRecord) -> Result<()> {
        self.file
            .write_all(encode_line(record).as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanHeader {
    format: String,
    plan_hash: String,
    configs: Vec<CorpusConfig>,
}

/// Plan file: a header line with the configs, then one trial spec per line.
pub fn write_plan(path: &Path, plan: &GridPlan) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut out = encode_line(&PlanHeader {
        format: PLAN_FORMAT.into(),
        plan_hash: plan.hash.clone(),
        configs: plan.configs.clone(),
    });
    for t in &plan.trials {
        out.push_str(&encode_line(t));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_plan(path: &Path) -> Result<GridPlan> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: PlanHeader = lines
        .next()
        .and_then(decode_line)
        .ok_or_else(|| Error::format("plan file", path, "bad header line"))?;
    let trials = lines
        .enumerate()
        .map(|(i, l)| {
            decode_line::<TrialSpec>(l)
                .ok_or_else(|| Error::format("plan file", path, format!("bad trial line {}", i + 2)))
        })
        .collect::<Result<Vec<_>>>()?;
    let hash = super::plan::plan_hash(&header.configs, &trials);
    if hash != header.plan_hash {
        return Err(Error::format("plan file", path, "plan hash does not match contents"));
    }
    Ok(GridPlan {
        configs: header.configs,
        trials,
        hash,
    })
}
