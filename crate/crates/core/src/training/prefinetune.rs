use rand::Rng;
use serde::{Deserialize, Serialize};

use super::early_stopping::{EarlyStopping, Progress};
use super::{scaled_loss, EpochRecord, OptimConfig, TrainState};
use crate::data::{Corpus, Split};
use crate::kernel::{backward, cross_entropy, forward, Gradients, ModelState, Sgd, TaskId};
use crate::sampler::{SeedDeriver, TaskSampleStream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefinetuneSpec {
    /// 1-based index of the corpus subset in the power-set ordering.
    pub config_id: usize,
    pub corpus_set: Vec<String>,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub optim: OptimConfig,
    /// Shared by every config: all of them start from the same encoder.
    pub seed: u64,
}

impl PrefinetuneSpec {
    pub fn new(config_id: usize, corpus_set: Vec<String>, seed: u64) -> Self {
        PrefinetuneSpec {
            config_id,
            corpus_set,
            input_dim: 16,
            hidden_dim: 32,
            max_epochs: 200,
            patience: 3,
            optim: OptimConfig::default(),
            seed,
        }
    }

    /// The seed-initialised encoder every config starts from.
    pub fn initial_model(&self) -> ModelState {
        let seed = SeedDeriver::new(self.seed).str("encoder-init").finish();
        ModelState::init(self.input_dim, self.hidden_dim, seed)
    }
}

/// Unweighted mean over tasks of each task's mean scaled validation loss.
pub fn validation_loss<'a>(model: &ModelState, corpora: impl IntoIterator<Item = &'a Corpus>) -> Result<f64> {
    let mut task_means = Vec::new();
    for corpus in corpora {
        let task = TaskId::new(corpus.name());
        if model.head(&task).is_none() {
            return Err(Error::UnknownTask(corpus.name().to_string()));
        }
        let n = corpus.n_labels();
        let mut sum = 0.0;
        let mut count = 0usize;
        for u in corpus.split(Split::Validation) {
            let logits = forward(model, &task, u.features.as_slice())?;
            sum += scaled_loss(cross_entropy(logits.as_slice(), u.label)?, n)?;
            count += 1;
        }
        if count == 0 {
            return Err(Error::InvalidArgument(format!(
                "corpus `{}` has an empty validation split",
                corpus.name()
            )));
        }
        task_means.push(sum / count as f64);
    }
    if task_means.is_empty() {
        return Err(Error::InvalidArgument("validation loss over zero tasks".into()));
    }
    Ok(task_means.iter().sum::<f64>() / task_means.len() as f64)
}

fn select<'a>(spec: &PrefinetuneSpec, available: &'a [Corpus]) -> Result<Vec<&'a Corpus>> {
    let mut names = spec.corpus_set.clone();
    names.sort();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(format!(
            "config {} lists a corpus twice",
            spec.config_id
        )));
    }
    spec.corpus_set
        .iter()
        .map(|name| {
            let c = available
                .iter()
                .find(|c| c.name() == name)
                .ok_or_else(|| Error::InvalidArgument(format!("corpus `{name}` required by config {} is missing", spec.config_id)))?;
            if c.dim() != spec.input_dim {
                return Err(Error::DimensionMismatch {
                    context: "corpus features vs encoder input",
                    expected: spec.input_dim,
                    found: c.dim(),
                });
            }
            Ok(c)
        })
        .collect()
}

/// Multi-task pre-finetuning over `spec.corpus_set` (looked up by name in
/// `available`).
///
/// Each step draws a task uniformly, draws `batch_size` training instances
/// of that task, routes them through the task's head and applies SGD to the
/// gradient of the mean scaled loss. One epoch is `Σ|train|` instances.
/// After every epoch the task-averaged validation loss drives early
/// stopping; the returned model is the best epoch's, not the last.
///
/// An empty corpus set returns the seed-initialised encoder untouched.
pub fn prefinetune(spec: &PrefinetuneSpec, available: &[Corpus]) -> Result<(ModelState, TrainState)> {
    spec.optim.validate()?;
    if spec.patience == 0 {
        return Err(Error::InvalidArgument("patience must be positive".into()));
    }
    let mut model = spec.initial_model();
    let corpora = select(spec, available)?;
    if corpora.is_empty() {
        return Ok((model, TrainState::untrained()));
    }

    for c in &corpora {
        let seed = SeedDeriver::new(spec.seed).str("head").str(c.name()).finish();
        model.attach_head(TaskId::new(c.name()), c.n_labels(), seed)?;
    }
    let pools: Vec<Vec<(&[f64], usize)>> = corpora
        .iter()
        .map(|c| {
            c.split(Split::Train)
                .map(|u| (u.features.as_slice(), u.label))
                .collect()
        })
        .collect();
    let tasks: Vec<TaskId> = corpora.iter().map(|c| TaskId::new(c.name())).collect();
    let log_n: Vec<usize> = corpora.iter().map(|c| c.n_labels()).collect();
    let instances_per_epoch: usize = pools.iter().map(Vec::len).sum();
    let batch = spec.optim.batch_size;
    let steps_per_epoch = instances_per_epoch.div_ceil(batch);

    let mut stream_seed = SeedDeriver::new(spec.seed).str("task-stream");
    for name in &spec.corpus_set {
        stream_seed = stream_seed.str(name);
    }
    let mut stream = TaskSampleStream::new(tasks.clone(), stream_seed.finish())?;
    let mut opt = Sgd::new(spec.optim.lr, spec.optim.momentum)?;

    let initial = validation_loss(&model, corpora.iter().copied())?;
    let mut es = EarlyStopping::new(spec.patience);
    es.observe(initial);
    let mut best_model = model.clone();
    let mut state = TrainState::untrained();
    state.curve.push(EpochRecord {
        epoch: 0,
        train_loss: None,
        monitored_loss: initial,
    });

    for epoch in 1..=spec.max_epochs {
        let mut train_sum = 0.0;
        for _ in 0..steps_per_epoch {
            let t = stream.sample_index();
            let pool = &pools[t];
            let mut grads = Gradients::zeros(&model, &tasks[t])?;
            for _ in 0..batch {
                let (x, y) = pool[stream.rng().random_range(0..pool.len())];
                grads.accumulate(&backward(&model, &tasks[t], x, y)?)?;
            }
            grads.scale(1.0 / (batch as f64 * (log_n[t] as f64).ln()));
            if !grads.loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch} (config {})",
                    spec.config_id
                )));
            }
            train_sum += grads.loss;
            opt.step(&mut model, &grads)?;
            state.steps += 1;
        }
        let val = validation_loss(&model, corpora.iter().copied())?;
        if !val.is_finite() {
            return Err(Error::NonFinite(format!(
                "validation loss at epoch {epoch} (config {})",
                spec.config_id
            )));
        }
        state.curve.push(EpochRecord {
            epoch,
            train_loss: Some(train_sum / steps_per_epoch as f64),
            monitored_loss: val,
        });
        state.epochs_run = epoch;
        let progress = es.observe(val);
        if progress == Progress::Improved {
            best_model = model.clone();
        }
        if progress == Progress::Stop {
            break;
        }
    }
    state.best_loss = es.best();
    state.best_epoch = es.best_epoch();
    state.epochs_since_improvement = es.since_improvement();
    Ok((best_model, state))
}
