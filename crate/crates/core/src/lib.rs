//! Multi-task pre-finetuning for few-shot classification.
//!
//! The crate trains a small feed-forward encoder on several labelled corpora
//! at once (one linear head per corpus, uniformly sampled tasks, losses scaled
//! by `1 / ln(n_labels)`), then fine-tunes the encoder on binary few-shot
//! tasks drawn per speaker and per emotion. Every subset of the pre-finetuning
//! corpora gets its own encoder, and the downstream trial grid over those
//! encoders is aggregated into ablation reports.
//!
//! | module | what it holds |
//! |---|---|
//! | [`kernel`] | vectors/matrices, the encoder + per-task heads, gradients, SGD, checkpoints |
//! | [`data`] | corpus schema, on-disk format, synthetic corpus suite |
//! | [`sampler`] | uniform task stream, stratified few-shot sampling, trial seeds |
//! | [`training`] | scaled loss, multi-task pre-finetuning, downstream fine-tuning |
//! | [`metrics`] | macro F1, constant-prediction baseline, mean/stderr |
//! | [`experiments`] | power-set planner, trial grid, resumable parallel runner, results store |
//! | [`analysis`] | n-corpora curves, corpus contributions, inclusion/exclusion, stratified curves |
//! | [`cli`] | run configuration and the command implementations behind the binary |
//!
//! The `examples/` directory has one runnable program per capability.

pub mod analysis;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiments;
pub mod kernel;
pub mod metrics;
pub mod sampler;
pub mod training;

pub use error::{Error, Result};
