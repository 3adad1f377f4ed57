use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::sampler::{hex_digest, trial_seed};
use crate::{Error, Result};

/// One member of the power set of pre-finetuning corpora. `config_id` 1 is
/// always the empty set (no pre-finetuning).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub config_id: usize,
    pub corpora: Vec<String>,
}

impl CorpusConfig {
    pub fn n_corpora(&self) -> usize {
        self.corpora.len()
    }

    pub fn label(&self) -> String {
        if self.corpora.is_empty() {
            "none".to_string()
        } else {
            self.corpora.join("+")
        }
    }
}

/// All `2^m` subsets of `corpora`, ordered by size and then lexically by
/// their sorted member names, numbered from 1.
pub fn enumerate_powerset(corpora: &[String]) -> Result<Vec<CorpusConfig>> {
    let unique: BTreeSet<&String> = corpora.iter().collect();
    if unique.len() != corpora.len() {
        return Err(Error::InvalidArgument(format!("duplicate corpus names in {corpora:?}")));
    }
    if corpora.len() >= usize::BITS as usize {
        return Err(Error::InvalidArgument("too many corpora for a power set".into()));
    }
    let sorted: Vec<&String> = unique.into_iter().collect();
    let mut subsets: Vec<Vec<String>> = (0..1usize << sorted.len())
        .map(|mask| {
            sorted
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, name)| (*name).clone())
                .collect()
        })
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(subsets
        .into_iter()
        .enumerate()
        .map(|(i, corpora)| CorpusConfig {
            config_id: i + 1,
            corpora,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialSpec {
    pub config_id: usize,
    pub speaker: String,
    pub emotion: String,
    pub k: usize,
    pub trial_index: usize,
    pub seed: u64,
}

impl TrialSpec {
    pub fn key(&self) -> TrialKey {
        TrialKey {
            config_id: self.config_id,
            speaker: self.speaker.clone(),
            emotion: self.emotion.clone(),
            k: self.k,
            trial_index: self.trial_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrialKey {
    pub config_id: usize,
    pub speaker: String,
    pub emotion: String,
    pub k: usize,
    pub trial_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridDims {
    pub speakers: Vec<String>,
    pub emotions: Vec<String>,
    pub ks: Vec<usize>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPlan {
    pub configs: Vec<CorpusConfig>,
    pub trials: Vec<TrialSpec>,
    pub hash: String,
}

impl GridPlan {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn config(&self, config_id: usize) -> Option<&CorpusConfig> {
        self.configs.iter().find(|c| c.config_id == config_id)
    }
}

pub(crate) fn plan_hash(configs: &[CorpusConfig], trials: &[TrialSpec]) -> String {
    let bytes = serde_json::to_vec(&(configs, trials)).expect("plan serialises");
    hex_digest(&bytes)
}

/// Full cross product configs × speakers × emotions × k × trials.
pub fn plan_grid(configs: &[CorpusConfig], dims: &GridDims, global_seed: u64) -> Result<GridPlan> {
    for (name, empty) in [
        ("configs", configs.is_empty()),
        ("speakers", dims.speakers.is_empty()),
        ("emotions", dims.emotions.is_empty()),
        ("k values", dims.ks.is_empty()),
        ("trials", dims.trials == 0),
    ] {
        if empty {
            return Err(Error::InvalidArgument(format!("grid dimension `{name}` is empty")));
        }
    }
    let mut trials = Vec::with_capacity(
        configs.len() * dims.speakers.len() * dims.emotions.len() * dims.ks.len() * dims.trials,
    );
    for c in configs {
        for speaker in &dims.speakers {
            for emotion in &dims.emotions {
                for &k in &dims.ks {
                    for trial_index in 0..dims.trials {
                        trials.push(TrialSpec {
                            config_id: c.config_id,
                            speaker: speaker.clone(),
                            emotion: emotion.clone(),
                            k,
                            trial_index,
                            seed: trial_seed(global_seed, c.config_id, speaker, emotion, k, trial_index),
                        });
                    }
                }
            }
        }
    }
    let distinct: BTreeSet<TrialKey> = trials.iter().map(TrialSpec::key).collect();
    if distinct.len() != trials.len() {
        return Err(Error::InvalidArgument("grid dimensions contain duplicates".into()));
    }
    let hash = plan_hash(configs, &trials);
    Ok(GridPlan {
        configs: configs.to_vec(),
        trials,
        hash,
    })
}
