//! Power-set planning, the downstream trial grid, and its resumable runner.

mod checkpoints;
mod plan;
mod runner;
mod store;

pub use checkpoints::{
    checkpoint_file, load_models, prefinetune_all, spec_for, spec_hash, verify_checkpoints, CheckpointEntry, CheckpointManifest, PrefinetuneSummary,
    CHECKPOINT_MANIFEST,
};
pub use plan::{enumerate_powerset, plan_grid, CorpusConfig, GridDims, GridPlan, TrialKey, TrialSpec};
pub use runner::{run_grid, run_trial, store_hash, FinetuneSettings, GridContext, RunOptions, RunSummary};
pub use store::{load_store, read_plan, write_plan, StoreSnapshot, StoreWriter, TrialRecord, TrialStatus};
