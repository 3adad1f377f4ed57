use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plan::{GridPlan, TrialSpec};
use super::store::{StoreWriter, TrialRecord, TrialStatus};
use crate::data::{Corpus, Language};
use crate::kernel::ModelState;
use crate::metrics::constant_baseline;
use crate::sampler::{binary_test_set, sample_fewshot, FewShotSpec, SeedDeriver};
use crate::training::{evaluate, finetune, FinetuneSpec, OptimConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneSettings {
    pub max_epochs: usize,
    pub patience: usize,
    pub optim: OptimConfig,
}

impl Default for FinetuneSettings {
    fn default() -> Self {
        FinetuneSettings {
            max_epochs: 200,
            patience: 30,
            optim: OptimConfig::default(),
        }
    }
}

/// Read-only inputs shared by every trial.
pub struct GridContext<'a> {
    pub downstream: &'a Corpus,
    pub models: &'a BTreeMap<usize, ModelState>,
    pub finetune: FinetuneSettings,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub parallelism: usize,
    /// Stop after this many new trials (the rest stay pending for a resume).
    pub max_new_trials: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub planned: usize,
    pub skipped: usize,
    pub executed: usize,
    pub failed: usize,
}

fn execute(spec: &TrialSpec, ctx: &GridContext<'_>) -> Result<(crate::metrics::F1Report, f64, usize)> {
    let base = ctx.models.get(&spec.config_id).ok_or_else(|| Error::MissingCheckpoint {
        config_id: spec.config_id,
        path: Default::default(),
    })?;
    let few = FewShotSpec::new(&spec.speaker, &spec.emotion, spec.k, spec.trial_index, spec.seed)?;
    let sample = sample_fewshot(ctx.downstream, &few)?;
    let ft = FinetuneSpec {
        few_shot: few,
        max_epochs: ctx.finetune.max_epochs,
        patience: ctx.finetune.patience,
        optim: ctx.finetune.optim,
    };
    let (model, state) = finetune(base, &sample, &ft)?;
    let (test_x, test_y) = binary_test_set(ctx.downstream, &spec.speaker, &spec.emotion)?;
    let report = evaluate(&model, &test_x, &test_y)?;
    Ok((report, constant_baseline(&test_y)?, state.epochs_run))
}

/// Runs one downstream trial. Errors become a `failed` record.
pub fn run_trial(spec: &TrialSpec, corpora: &[String], ctx: &GridContext<'_>) -> TrialRecord {
    let start = Instant::now();
    let outcome = execute(spec, ctx);
    let wall_ms = start.elapsed().as_millis() as u64;
    let language = ctx
        .downstream
        .speaker_language(&spec.speaker)
        .unwrap_or(Language::English);
    let mut record = TrialRecord {
        config_id: spec.config_id,
        speaker: spec.speaker.clone(),
        emotion: spec.emotion.clone(),
        k: spec.k,
        trial_index: spec.trial_index,
        seed: spec.seed,
        corpora: corpora.to_vec(),
        language,
        status: TrialStatus::Ok,
        macro_f1: None,
        per_class_f1: None,
        baseline_f1: None,
        epochs: 0,
        wall_ms,
        error: None,
    };
    match outcome {
        Ok((report, baseline, epochs)) => {
            record.macro_f1 = Some(report.macro_f1);
            record.per_class_f1 = Some(report.per_class_f1);
            record.baseline_f1 = Some(baseline);
            record.epochs = epochs;
        }
        Err(e) => {
            record.status = TrialStatus::Failed;
            record.error = Some(e.to_string());
        }
    }
    record
}

/// Identity of a store: the plan plus everything a record depends on besides
/// its trial spec (downstream data, fine-tuning settings, encoder weights).
pub fn store_hash(plan: &GridPlan, ctx: &GridContext<'_>) -> String {
    let needed: BTreeSet<usize> = plan.trials.iter().map(|t| t.config_id).collect();
    let mut d = SeedDeriver::new(0)
        .str(&plan.hash)
        .str(&ctx.downstream.fingerprint())
        .str(&serde_json::to_string(&ctx.finetune).expect("settings serialise"));
    for (id, model) in ctx.models.iter().filter(|(id, _)| needed.contains(id)) {
        d = d.u64(*id as u64);
        for (name, values) in model.tensors() {
            d = d.str(&name);
            for v in values {
                d = d.u64(v.to_bits());
            }
        }
    }
    format!("{:016x}", d.finish())
}

/// Executes every trial of `plan` not yet in the store at `store_path`.
///
/// Trials run on a pool of `parallelism` threads; a single writer appends
/// records as they finish. Records depend only on their trial spec, the
/// checkpoints and the corpus, so the final store content does not depend
/// on the degree of parallelism or on interruptions.
pub fn run_grid(plan: &GridPlan, ctx: &GridContext<'_>, store_path: &Path, opts: RunOptions) -> Result<RunSummary> {
    let needed: BTreeSet<usize> = plan.trials.iter().map(|t| t.config_id).collect();
    if let Some(missing) = needed.iter().find(|id| !ctx.models.contains_key(id)) {
        return Err(Error::MissingCheckpoint {
            config_id: *missing,
            path: Default::default(),
        });
    }
    let corpora_of: BTreeMap<usize, Vec<String>> = plan
        .configs
        .iter()
        .map(|c| (c.config_id, c.corpora.clone()))
        .collect();

    let (mut writer, snap) = StoreWriter::open(store_path, &store_hash(plan, ctx))?;
    let done: BTreeSet<_> = snap.records.iter().map(TrialRecord::key).collect();
    let mut pending: Vec<&TrialSpec> = plan.trials.iter().filter(|t| !done.contains(&t.key())).collect();
    let skipped = plan.len() - pending.len();
    if let Some(limit) = opts.max_new_trials {
        pending.truncate(limit);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let (tx, rx) = mpsc::channel::<TrialRecord>();
    let mut summary = RunSummary {
        planned: plan.len(),
        skipped,
        ..Default::default()
    };
    let mut write_error = None;
    std::thread::scope(|scope| {
        let pending = &pending;
        let corpora_of = &corpora_of;
        scope.spawn(move || {
            pool.install(|| {
                pending.par_iter().for_each_with(tx, |tx, spec| {
                    let corpora = corpora_of.get(&spec.config_id).map(Vec::as_slice).unwrap_or(&[]);
                    // the receiver only hangs up after a write error
                    let _ = tx.send(run_trial(spec, corpora, ctx));
                });
            });
        });
        for record in rx {
            if write_error.is_some() {
                continue;
            }
            if let Err(e) = writer.append(&record) {
                write_error = Some(e);
                continue;
            }
            summary.executed += 1;
            if !record.is_ok() {
                summary.failed += 1;
                log::warn!(
                    "trial failed: config {} {} {} k={} #{}: {}",
                    record.config_id,
                    record.speaker,
                    record.emotion,
                    record.k,
                    record.trial_index,
                    record.error.as_deref().unwrap_or("")
                );
            }
        }
    });
    match write_error {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}
