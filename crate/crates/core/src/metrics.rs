//! Binary macro F1, the constant-prediction baseline, and mean ± standard error.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ClassCounts {
    /// `2·tp / (2·tp + fp + fn)`, and 0 when the denominator is 0.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

/// Per-class counts for the binary task (index 0 = negative, 1 = positive).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub classes: [ClassCounts; 2],
}

impl ConfusionCounts {
    pub fn from_pairs(predictions: &[usize], labels: &[usize]) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "predictions vs labels",
                expected: labels.len(),
                found: predictions.len(),
            });
        }
        if labels.is_empty() {
            return Err(Error::InvalidArgument("macro F1 of an empty set".into()));
        }
        let mut counts = ConfusionCounts::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            if y > 1 || p > 1 {
                return Err(Error::LabelOutOfRange {
                    label: y.max(p),
                    n_labels: 2,
                });
            }
            if p == y {
                counts.classes[y].tp += 1;
            } else {
                counts.classes[p].fp += 1;
                counts.classes[y].fn_ += 1;
            }
        }
        Ok(counts)
    }

    pub fn total(&self) -> usize {
        // every instance is a tp of its class or a fn of its class
        self.classes.iter().map(|c| c.tp + c.fn_).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub macro_f1: f64,
    pub per_class_f1: [f64; 2],
    pub support: [usize; 2],
}

pub fn macro_f1(predictions: &[usize], labels: &[usize]) -> Result<F1Report> {
    let counts = ConfusionCounts::from_pairs(predictions, labels)?;
    let per_class_f1 = [counts.classes[0].f1(), counts.classes[1].f1()];
    Ok(F1Report {
        macro_f1: (per_class_f1[0] + per_class_f1[1]) / 2.0,
        per_class_f1,
        support: [
            counts.classes[0].tp + counts.classes[0].fn_,
            counts.classes[1].tp + counts.classes[1].fn_,
        ],
    })
}

/// Best macro F1 reachable by always predicting one class.
pub fn constant_baseline(labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("constant baseline of an empty set".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for c in [0usize, 1] {
        let preds = vec![c; labels.len()];
        best = best.max(macro_f1(&preds, labels)?.macro_f1);
    }
    Ok(best)
}

/// Mean and standard error (sample std with `n − 1`, over `√n`); the
/// standard error of a single value is 0.
pub fn mean_and_stderr(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("mean of an empty set".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
