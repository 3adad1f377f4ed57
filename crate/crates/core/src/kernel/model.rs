//! Shared rectifier encoder with one linear classification head per task.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{Matrix, Vector};
use crate::{Error, Result};

/// Identifies the task (corpus) a head is bound to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(String);

impl TaskId {
    pub fn new(name: impl Into<String>) -> Self {
        TaskId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        TaskId::new(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// hidden × input
    pub w1: Matrix,
    pub b1: Vector,
}

impl EncoderParams {
    pub fn new(w1: Matrix, b1: Vector) -> Result<Self> {
        if b1.len() != w1.rows() {
            return Err(Error::DimensionMismatch {
                context: "encoder bias",
                expected: w1.rows(),
                found: b1.len(),
            });
        }
        Ok(EncoderParams { w1, b1 })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub task: TaskId,
    /// n_labels × hidden
    pub w: Matrix,
    pub b: Vector,
}

impl HeadParams {
    pub fn new(task: TaskId, w: Matrix, b: Vector) -> Result<Self> {
        if w.rows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "head `{task}` needs at least 2 labels, got {}",
                w.rows()
            )));
        }
        if b.len() != w.rows() {
            return Err(Error::DimensionMismatch {
                context: "head bias",
                expected: w.rows(),
                found: b.len(),
            });
        }
        Ok(HeadParams { task, w, b })
    }

    pub fn n_labels(&self) -> usize {
        self.w.rows()
    }
}

/// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
fn uniform_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let s = 1.0 / (cols as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-s..=s)).collect();
    Matrix::new(rows, cols, data).expect("finite uniform draws")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub encoder: EncoderParams,
    heads: BTreeMap<TaskId, HeadParams>,
}

impl ModelState {
    pub fn new(encoder: EncoderParams) -> Self {
        ModelState {
            encoder,
            heads: BTreeMap::new(),
        }
    }

    /// Seeded encoder with zero biases and no heads.
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = uniform_matrix(hidden_dim, input_dim, &mut rng);
        let encoder = EncoderParams::new(w1, Vector::zeros(hidden_dim)).expect("consistent shapes");
        ModelState::new(encoder)
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.hidden_dim()
    }

    pub fn head(&self, task: &TaskId) -> Option<&HeadParams> {
        self.heads.get(task)
    }

    pub(crate) fn head_mut(&mut self, task: &TaskId) -> Option<&mut HeadParams> {
        self.heads.get_mut(task)
    }

    pub fn heads(&self) -> impl Iterator<Item = &HeadParams> {
        self.heads.values()
    }

    pub fn tasks(&self) -> impl Iterator<Item = &TaskId> {
        self.heads.keys()
    }

    pub fn insert_head(&mut self, head: HeadParams) -> Result<()> {
        if head.w.cols() != self.hidden_dim() {
            return Err(Error::DimensionMismatch {
                context: "head input",
                expected: self.hidden_dim(),
                found: head.w.cols(),
            });
        }
        if self.heads.contains_key(&head.task) {
            return Err(Error::InvalidArgument(format!("duplicate head `{}`", head.task)));
        }
        self.heads.insert(head.task.clone(), head);
        Ok(())
    }

    /// Attach a freshly initialised head (uniform weights, zero bias).
    pub fn attach_head(&mut self, task: TaskId, n_labels: usize, seed: u64) -> Result<()> {
        if n_labels < 2 {
            return Err(Error::InvalidArgument(format!(
                "head `{task}` needs at least 2 labels, got {n_labels}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = uniform_matrix(n_labels, self.hidden_dim(), &mut rng);
        self.insert_head(HeadParams::new(task, w, Vector::zeros(n_labels))?)
    }

    /// Drops every head, keeping the encoder.
    pub fn encoder_only(&self) -> ModelState {
        ModelState::new(self.encoder.clone())
    }

    pub fn num_params(&self) -> usize {
        let enc = self.encoder.w1.as_slice().len() + self.encoder.b1.len();
        enc + self
            .heads
            .values()
            .map(|h| h.w.as_slice().len() + h.b.len())
            .sum::<usize>()
    }

    /// Parameter tensors in declaration order: encoder `w1`, `b1`, then each
    /// head (sorted by task) `w`, `b`.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = vec![
            ("encoder.w1".to_string(), self.encoder.w1.as_slice()),
            ("encoder.b1".to_string(), self.encoder.b1.as_slice()),
        ];
        for (task, h) in &self.heads {
            out.push((format!("head[{task}].w"), h.w.as_slice()));
            out.push((format!("head[{task}].b"), h.b.as_slice()));
        }
        out
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.encoder.w1.as_mut_slice(), self.encoder.b1.as_mut_slice()];
        for h in self.heads.values_mut() {
            out.push(h.w.as_mut_slice());
            out.push(h.b.as_mut_slice());
        }
        out
    }

    fn routed(&self, task: &TaskId, x: &[f64]) -> Result<&HeadParams> {
        let head = self
            .heads
            .get(task)
            .ok_or_else(|| Error::UnknownTask(task.to_string()))?;
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "encoder input",
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(head)
    }

    fn activations(&self, head: &HeadParams, x: &[f64]) -> Activations {
        let h = self.hidden_dim();
        let mut pre = vec![0.0; h];
        self.encoder
            .w1
            .affine_into(x, self.encoder.b1.as_slice(), &mut pre);
        let hidden: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        let mut logits = vec![0.0; head.n_labels()];
        head.w.affine_into(&hidden, head.b.as_slice(), &mut logits);
        Activations { pre, hidden, logits }
    }
}

struct Activations {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

/// Logits of `task`'s head for input `x`.
pub fn forward(model: &ModelState, task: &TaskId, x: &[f64]) -> Result<Vector> {
    let head = model.routed(task, x)?;
    let logits = model.activations(head, x).logits;
    Vector::new(logits).map_err(|_| Error::NonFinite(format!("logits of head `{task}`")))
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&z| (z - lse).exp()).collect()
}

/// Negative log-likelihood of `label` under `softmax(logits)`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            n_labels: logits.len(),
        });
    }
    // rounding can push lse - z slightly below zero when one logit dominates
    Ok((log_sum_exp(logits) - logits[label]).max(0.0))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &ModelState, task: &TaskId, x: &[f64]) -> Result<usize> {
    Ok(argmax(forward(model, task, x)?.as_slice()))
}

/// Loss gradients for the encoder and the single routed head.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub task: TaskId,
    pub loss: f64,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl Gradients {
    pub fn zeros(model: &ModelState, task: &TaskId) -> Result<Self> {
        let head = model
            .head(task)
            .ok_or_else(|| Error::UnknownTask(task.to_string()))?;
        Ok(Gradients {
            task: task.clone(),
            loss: 0.0,
            w1: vec![0.0; model.encoder.w1.as_slice().len()],
            b1: vec![0.0; model.hidden_dim()],
            head_w: vec![0.0; head.w.as_slice().len()],
            head_b: vec![0.0; head.n_labels()],
        })
    }

    pub fn scale(&mut self, factor: f64) {
        self.loss *= factor;
        for g in self.tensors_mut() {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        if other.task != self.task {
            return Err(Error::InvalidArgument(format!(
                "cannot accumulate gradients of `{}` into `{}`",
                other.task, self.task
            )));
        }
        self.loss += other.loss;
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            if dst.len() != src.len() {
                return Err(Error::DimensionMismatch {
                    context: "gradient accumulation",
                    expected: dst.len(),
                    found: src.len(),
                });
            }
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
        Ok(())
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.head_w, &self.head_b]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.head_w, &mut self.head_b]
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Cross-entropy gradients of one labelled instance routed through `task`.
pub fn backward(model: &ModelState, task: &TaskId, x: &[f64], label: usize) -> Result<Gradients> {
    let head = model.routed(task, x)?;
    let act = model.activations(head, x);
    let loss = cross_entropy(&act.logits, label)?;

    let mut dlogits = softmax(&act.logits);
    dlogits[label] -= 1.0;

    let hidden_dim = model.hidden_dim();
    let mut head_w = vec![0.0; head.w.as_slice().len()];
    for (row, &d) in head_w.chunks_exact_mut(hidden_dim).zip(&dlogits) {
        row.iter_mut().zip(&act.hidden).for_each(|(g, &h)| *g = d * h);
    }

    let mut dhidden = vec![0.0; hidden_dim];
    head.w.transpose_mul_into(&dlogits, &mut dhidden);
    for (d, &z) in dhidden.iter_mut().zip(&act.pre) {
        if z <= 0.0 {
            *d = 0.0;
        }
    }

    let input_dim = model.input_dim();
    let mut w1 = vec![0.0; hidden_dim * input_dim];
    for (row, &d) in w1.chunks_exact_mut(input_dim).zip(&dhidden) {
        if d != 0.0 {
            row.iter_mut().zip(x).for_each(|(g, &xi)| *g = d * xi);
        }
    }

    let grads = Gradients {
        task: task.clone(),
        loss,
        w1,
        b1: dhidden,
        head_w,
        head_b: dlogits,
    };
    if !grads.is_finite() {
        return Err(Error::NonFinite(format!("gradients of head `{task}`")));
    }
    Ok(grads)
}
