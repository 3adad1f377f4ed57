//! Uniform task sampling for pre-finetuning and class-balanced few-shot
//! sampling for downstream trials.

mod seed;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use seed::{hex_digest, trial_seed, SeedDeriver};

use crate::data::{Corpus, Split};
use crate::kernel::TaskId;
use crate::{Error, Result};

/// Few-shot sizes of the downstream protocol.
pub const FEW_SHOT_KS: [usize; 7] = [2, 4, 8, 16, 24, 32, 64];

/// Endless, seeded stream of uniformly chosen tasks.
#[derive(Debug, Clone)]
pub struct TaskSampleStream {
    rng: ChaCha8Rng,
    tasks: Vec<TaskId>,
}

impl TaskSampleStream {
    pub fn new(tasks: Vec<TaskId>, seed: u64) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::InvalidArgument("task stream needs at least one task".into()));
        }
        Ok(TaskSampleStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            tasks,
        })
    }

    pub fn tasks(&self) -> &[TaskId] {
        &self.tasks
    }

    pub fn sample_task(&mut self) -> &TaskId {
        let i = self.rng.random_range(0..self.tasks.len());
        &self.tasks[i]
    }

    /// Index of the next task, for callers that keep per-task tables.
    pub fn sample_index(&mut self) -> usize {
        self.rng.random_range(0..self.tasks.len())
    }

    /// Shares the stream's RNG for instance draws, keeping one seeded source.
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSpec {
    pub speaker_id: String,
    pub emotion: String,
    pub k: usize,
    pub trial_index: usize,
    pub seed: u64,
}

impl FewShotSpec {
    pub fn new(speaker_id: impl Into<String>, emotion: impl Into<String>, k: usize, trial_index: usize, seed: u64) -> Result<Self> {
        if k == 0 || !k.is_multiple_of(2) || !FEW_SHOT_KS.contains(&k) {
            return Err(Error::InvalidArgument(format!(
                "k must be one of {FEW_SHOT_KS:?}, got {k}"
            )));
        }
        Ok(FewShotSpec {
            speaker_id: speaker_id.into(),
            emotion: emotion.into(),
            k,
            trial_index,
            seed,
        })
    }

    fn rng(&self) -> ChaCha8Rng {
        let seed = SeedDeriver::new(self.seed)
            .str("fewshot")
            .str(&self.speaker_id)
            .str(&self.emotion)
            .u64(self.k as u64)
            .u64(self.trial_index as u64)
            .finish();
        ChaCha8Rng::seed_from_u64(seed)
    }
}

/// A binary few-shot training set. `indices` point into the corpus'
/// utterance list; `labels` are 1 for the target emotion, 0 otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotSample {
    pub indices: Vec<usize>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl FewShotSample {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Draws `k/2` target-emotion and `k/2` other-emotion utterances from the
/// speaker's train pool, without replacement. Negatives are drawn uniformly
/// from all non-target emotions pooled together.
pub fn sample_fewshot(corpus: &Corpus, spec: &FewShotSpec) -> Result<FewShotSample> {
    let target = corpus
        .label_space()
        .index_of(&spec.emotion)
        .ok_or_else(|| Error::UnknownEmotion(spec.emotion.clone()))?;
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    let mut speaker_seen = false;
    for (i, u) in corpus.utterances().iter().enumerate() {
        if u.speaker_id != spec.speaker_id {
            continue;
        }
        speaker_seen = true;
        if u.split != Split::Train {
            continue;
        }
        if u.label == target {
            positives.push(i);
        } else {
            negatives.push(i);
        }
    }
    if !speaker_seen {
        return Err(Error::UnknownSpeaker(spec.speaker_id.clone()));
    }
    let half = spec.k / 2;
    for (side, pool) in [("positives", &positives), ("negatives", &negatives)] {
        if pool.len() < half {
            return Err(Error::InsufficientPool {
                speaker: spec.speaker_id.clone(),
                emotion: spec.emotion.clone(),
                side,
                needed: half,
                available: pool.len(),
            });
        }
    }

    let mut rng = spec.rng();
    let mut chosen: Vec<(usize, usize)> = index::sample(&mut rng, positives.len(), half)
        .into_iter()
        .map(|j| (positives[j], 1))
        .chain(
            index::sample(&mut rng, negatives.len(), half)
                .into_iter()
                .map(|j| (negatives[j], 0)),
        )
        .collect();
    chosen.shuffle(&mut rng);

    let utterances = corpus.utterances();
    Ok(FewShotSample {
        features: chosen
            .iter()
            .map(|&(i, _)| utterances[i].features.as_slice().to_vec())
            .collect(),
        indices: chosen.iter().map(|&(i, _)| i).collect(),
        labels: chosen.iter().map(|&(_, l)| l).collect(),
    })
}

/// The speaker's whole test split relabelled against `emotion`.
pub fn binary_test_set(corpus: &Corpus, speaker: &str, emotion: &str) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let target = corpus
        .label_space()
        .index_of(emotion)
        .ok_or_else(|| Error::UnknownEmotion(emotion.to_string()))?;
    let (features, labels): (Vec<_>, Vec<_>) = corpus
        .split(Split::Test)
        .filter(|u| u.speaker_id == speaker)
        .map(|u| (u.features.as_slice().to_vec(), usize::from(u.label == target)))
        .unzip();
    if labels.is_empty() {
        return Err(Error::UnknownSpeaker(speaker.to_string()));
    }
    Ok((features, labels))
}
