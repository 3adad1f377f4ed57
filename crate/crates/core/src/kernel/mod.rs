//! Dense math, the multi-head classifier, its gradients, and the optimizer.

pub mod checkpoint;
pub mod gradcheck;
pub mod linalg;
pub mod model;
pub mod optim;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointMeta};
pub use gradcheck::{grad_check, GradCheckReport, GradSample};
pub use linalg::{Matrix, Vector};
pub use model::{
    argmax, backward, cross_entropy, forward, predict, softmax, EncoderParams, Gradients, HeadParams,
    ModelState, TaskId,
};
pub use optim::{sgd_step, Sgd};
