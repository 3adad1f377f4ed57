use serde::Serialize;

use super::model::{backward, cross_entropy, forward, ModelState, TaskId};
use crate::{Error, Result};

pub const FD_EPSILON: f64 = 1e-5;

/// Below this magnitude on both sides a gradient entry counts as exactly zero.
pub const ZERO_GRADIENT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct GradSample {
    pub task: TaskId,
    pub x: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamError {
    pub sample: usize,
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub errors: Vec<ParamError>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < ZERO_GRADIENT_FLOOR {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

fn loss_at(model: &ModelState, sample: &GradSample) -> Result<f64> {
    let logits = forward(model, &sample.task, &sample.x)?;
    cross_entropy(logits.as_slice(), sample.label)
}

/// Compares `backward` against central finite differences for every
/// parameter of `model` on every sample.
pub fn grad_check(model: &ModelState, samples: &[GradSample]) -> Result<GradCheckReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("grad_check needs at least one sample".into()));
    }
    let mut work = model.clone();
    let names: Vec<String> = model.tensors().into_iter().map(|(n, _)| n).collect();
    let head_prefix = |task: &TaskId| format!("head[{task}].");
    let mut errors = Vec::new();
    for (s, sample) in samples.iter().enumerate() {
        let grads = backward(model, &sample.task, &sample.x, sample.label)?;
        let routed = head_prefix(&sample.task);
        for (t, name) in names.iter().enumerate() {
            let analytic_tensor: Option<&[f64]> = match name.as_str() {
                "encoder.w1" => Some(&grads.w1),
                "encoder.b1" => Some(&grads.b1),
                n if n == format!("{routed}w") => Some(&grads.head_w),
                n if n == format!("{routed}b") => Some(&grads.head_b),
                _ => None,
            };
            let len = model.tensors()[t].1.len();
            for i in 0..len {
                let original = work.tensors_mut()[t][i];
                work.tensors_mut()[t][i] = original + FD_EPSILON;
                let plus = loss_at(&work, sample)?;
                work.tensors_mut()[t][i] = original - FD_EPSILON;
                let minus = loss_at(&work, sample)?;
                work.tensors_mut()[t][i] = original;
                let numeric = (plus - minus) / (2.0 * FD_EPSILON);
                let analytic = analytic_tensor.map_or(0.0, |g| g[i]);
                errors.push(ParamError {
                    sample: s,
                    tensor: name.clone(),
                    index: i,
                    analytic,
                    numeric,
                    relative_error: relative_error(analytic, numeric),
                });
            }
        }
    }
    let max_relative_error = errors.iter().map(|e| e.relative_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_relative_error,
        errors,
    })
}
