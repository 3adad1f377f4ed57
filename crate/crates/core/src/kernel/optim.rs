//! SGD with heavy-ball momentum.
//!
//! `v ← momentum·v + g`, `p ← p − lr·v`. Velocity buffers exist per tensor
//! and only tensors present in the gradient (the encoder and the routed head)
//! move on a step.

use std::collections::BTreeMap;

use super::model::{Gradients, ModelState, TaskId};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    lr: f64,
    momentum: f64,
    encoder_velocity: Option<[Vec<f64>; 2]>,
    head_velocity: BTreeMap<TaskId, [Vec<f64>; 2]>,
}

impl Sgd {
    /// `lr = 0` is accepted and leaves parameters untouched.
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be >= 0, got {lr}")));
        }
        if !(momentum.is_finite() && (0.0..1.0).contains(&momentum)) {
            return Err(Error::InvalidArgument(format!(
                "momentum must be in [0, 1), got {momentum}"
            )));
        }
        Ok(Sgd {
            lr,
            momentum,
            encoder_velocity: None,
            head_velocity: BTreeMap::new(),
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn step(&mut self, model: &mut ModelState, grads: &Gradients) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite(format!("gradient for `{}`", grads.task)));
        }
        let hidden = model.hidden_dim();
        let w1_len = model.encoder.w1.as_slice().len();
        check_len("encoder.w1 gradient", w1_len, grads.w1.len())?;
        check_len("encoder.b1 gradient", hidden, grads.b1.len())?;
        let (lr, mu) = (self.lr, self.momentum);
        {
            let head = model
                .head_mut(&grads.task)
                .ok_or_else(|| Error::UnknownTask(grads.task.to_string()))?;
            check_len("head.w gradient", head.w.as_slice().len(), grads.head_w.len())?;
            check_len("head.b gradient", head.n_labels(), grads.head_b.len())?;
            let vel = self
                .head_velocity
                .entry(grads.task.clone())
                .or_insert_with(|| [vec![0.0; grads.head_w.len()], vec![0.0; grads.head_b.len()]]);
            apply(head.w.as_mut_slice(), &mut vel[0], &grads.head_w, lr, mu);
            apply(head.b.as_mut_slice(), &mut vel[1], &grads.head_b, lr, mu);
        }
        let vel = self
            .encoder_velocity
            .get_or_insert_with(|| [vec![0.0; w1_len], vec![0.0; hidden]]);
        apply(model.encoder.w1.as_mut_slice(), &mut vel[0], &grads.w1, lr, mu);
        apply(model.encoder.b1.as_mut_slice(), &mut vel[1], &grads.b1, lr, mu);
        Ok(())
    }
}

fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}

fn apply(params: &mut [f64], velocity: &mut [f64], grad: &[f64], lr: f64, mu: f64) {
    for ((p, v), &g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = mu * *v + g;
        *p -= lr * *v;
    }
}

/// One stateless step: `params − lr·(momentum·velocity + grad)`; returns the
/// updated parameters and velocity.
pub fn sgd_step(
    params: &[f64],
    velocity: &[f64],
    grad: &[f64],
    lr: f64,
    momentum: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("sgd velocity", params.len(), velocity.len())?;
    check_len("sgd gradient", params.len(), grad.len())?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    let mut p = params.to_vec();
    let mut v = velocity.to_vec();
    apply(&mut p, &mut v, grad, lr, momentum);
    Ok((p, v))
}
