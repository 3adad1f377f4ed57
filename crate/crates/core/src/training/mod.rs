//! Multi-task pre-finetuning and downstream binary fine-tuning.

mod early_stopping;
mod finetune;
mod prefinetune;

pub use early_stopping::{stop_epoch, EarlyStopping, Progress};
pub use finetune::{evaluate, finetune, mean_loss, FinetuneSpec, DOWNSTREAM_TASK};
pub use prefinetune::{prefinetune, validation_loss, PrefinetuneSpec};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-instance loss divided by `ln n`, where `n` is the size of the task's
/// label space.
pub fn scaled_loss(raw: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "scaled loss needs a label space of at least 2, got {n}"
        )));
    }
    if !(raw.is_finite() && raw >= 0.0) {
        return Err(Error::InvalidArgument(format!("raw loss must be finite and >= 0, got {raw}")));
    }
    Ok(raw / (n as f64).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 0.05,
            momentum: 0.9,
            batch_size: 1,
        }
    }
}

impl OptimConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig {
                field: "batch_size".into(),
                reason: "must be positive".into(),
            });
        }
        crate::kernel::Sgd::new(self.lr, self.momentum).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-step training loss during the epoch (`None` for epoch 0).
    pub train_loss: Option<f64>,
    /// The quantity early stopping watches.
    pub monitored_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub best_loss: f64,
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
    pub epochs_run: usize,
    pub steps: usize,
    pub curve: Vec<EpochRecord>,
}

impl TrainState {
    fn untrained() -> Self {
        TrainState {
            best_loss: f64::NAN,
            best_epoch: 0,
            epochs_since_improvement: 0,
            epochs_run: 0,
            steps: 0,
            curve: Vec::new(),
        }
    }
}
