use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::early_stopping::{EarlyStopping, Progress};
use super::{EpochRecord, OptimConfig, TrainState};
use crate::kernel::{backward, cross_entropy, forward, predict, Gradients, ModelState, Sgd, TaskId};
use crate::metrics::{macro_f1, F1Report};
use crate::sampler::{FewShotSample, FewShotSpec, SeedDeriver};
use crate::{Error, Result};

/// Name of the binary head attached for downstream fine-tuning.
pub const DOWNSTREAM_TASK: &str = "downstream";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneSpec {
    pub few_shot: FewShotSpec,
    pub max_epochs: usize,
    pub patience: usize,
    pub optim: OptimConfig,
}

impl FinetuneSpec {
    pub fn new(few_shot: FewShotSpec) -> Self {
        FinetuneSpec {
            few_shot,
            max_epochs: 200,
            patience: 30,
            optim: OptimConfig::default(),
        }
    }
}

/// Mean unscaled cross-entropy of the downstream head over a labelled set.
pub fn mean_loss(model: &ModelState, features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let task = TaskId::new(DOWNSTREAM_TASK);
    let mut sum = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        sum += cross_entropy(forward(model, &task, x)?.as_slice(), y)?;
    }
    Ok(sum / labels.len() as f64)
}

/// Full fine-tuning of `base`'s encoder plus a fresh binary head on a
/// few-shot set. Pre-finetuning heads are discarded. Early stopping watches
/// the few-shot training loss (there is no validation split at k = 2); the
/// best epoch's parameters are returned.
pub fn finetune(base: &ModelState, train: &FewShotSample, spec: &FinetuneSpec) -> Result<(ModelState, TrainState)> {
    spec.optim.validate()?;
    if spec.patience == 0 || spec.patience > spec.max_epochs {
        return Err(Error::InvalidArgument(format!(
            "patience must be in 1..={}, got {}",
            spec.max_epochs, spec.patience
        )));
    }
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty few-shot training set".into()));
    }
    if let Some(x) = train.features.iter().find(|x| x.len() != base.input_dim()) {
        return Err(Error::DimensionMismatch {
            context: "few-shot features vs encoder input",
            expected: base.input_dim(),
            found: x.len(),
        });
    }

    let seeds = SeedDeriver::new(spec.few_shot.seed).str("finetune");
    let task = TaskId::new(DOWNSTREAM_TASK);
    let mut model = base.encoder_only();
    model.attach_head(task.clone(), 2, seeds.clone().str("head").finish())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.str("order").finish());
    let mut opt = Sgd::new(spec.optim.lr, spec.optim.momentum)?;

    let initial = mean_loss(&model, &train.features, &train.labels)?;
    let mut es = EarlyStopping::new(spec.patience);
    es.observe(initial);
    let mut best_model = model.clone();
    let mut state = TrainState::untrained();
    state.curve.push(EpochRecord {
        epoch: 0,
        train_loss: None,
        monitored_loss: initial,
    });

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=spec.max_epochs {
        order.shuffle(&mut rng);
        let mut step_sum = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(spec.optim.batch_size) {
            let mut grads = Gradients::zeros(&model, &task)?;
            for &i in chunk {
                grads.accumulate(&backward(&model, &task, &train.features[i], train.labels[i])?)?;
            }
            grads.scale(1.0 / chunk.len() as f64);
            step_sum += grads.loss;
            opt.step(&mut model, &grads)?;
            steps += 1;
        }
        state.steps += steps;
        let loss = mean_loss(&model, &train.features, &train.labels)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("fine-tuning loss at epoch {epoch}")));
        }
        state.curve.push(EpochRecord {
            epoch,
            train_loss: Some(step_sum / steps as f64),
            monitored_loss: loss,
        });
        state.epochs_run = epoch;
        match es.observe(loss) {
            Progress::Improved => best_model = model.clone(),
            Progress::Stop => break,
            Progress::NoImprovement => {}
        }
    }
    state.best_loss = es.best();
    state.best_epoch = es.best_epoch();
    state.epochs_since_improvement = es.since_improvement();
    Ok((best_model, state))
}

/// Macro F1 of the downstream head on a labelled binary set.
pub fn evaluate(model: &ModelState, features: &[Vec<f64>], labels: &[usize]) -> Result<F1Report> {
    let task = TaskId::new(DOWNSTREAM_TASK);
    let predictions = features
        .iter()
        .map(|x| predict(model, &task, x))
        .collect::<Result<Vec<_>>>()?;
    macro_f1(&predictions, labels)
}
