//! Brute-force reference implementations. Nothing here calls the crate's
//! numeric code: parameters are copied out of a `ModelState` once and every
//! computation is redone with plain loops.
#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;

use prefinetune::experiments::TrialRecord;
use prefinetune::kernel::ModelState;

/// A value computed the slow way, with a note on how.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T> {
    pub value: T,
    pub method: &'static str,
}

fn oracle<T>(value: T, method: &'static str) -> OracleResult<T> {
    OracleResult { value, method }
}

/// `y[r] = Σ_c w[r][c] · x[c]`, row-major `w`.
pub fn naive_matvec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    assert_eq!(w.len(), rows * cols);
    assert_eq!(x.len(), cols);
    let mut y = vec![0.0; rows];
    for r in 0..rows {
        let mut acc = 0.0;
        for c in 0..cols {
            acc += w[r * cols + c] * x[c];
        }
        y[r] = acc;
    }
    y
}

/// `C = A · B` with three nested loops.
pub fn naive_matmul(a: &[f64], n: usize, m: usize, b: &[f64], p: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * p];
    for i in 0..n {
        for j in 0..p {
            for k in 0..m {
                c[i * p + j] += a[i * m + k] * b[k * p + j];
            }
        }
    }
    c
}

pub fn naive_softmax(z: &[f64]) -> Vec<f64> {
    let total: f64 = z.iter().map(|v| v.exp()).sum();
    z.iter().map(|v| v.exp() / total).collect()
}

pub fn naive_cross_entropy(z: &[f64], label: usize) -> f64 {
    -naive_softmax(z)[label].ln()
}

/// Flat copy of a model's parameters.
#[derive(Debug, Clone)]
pub struct NaiveNet {
    pub input: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// task → (weights, biases, n_labels)
    pub heads: BTreeMap<String, (Vec<f64>, Vec<f64>, usize)>,
}

impl NaiveNet {
    pub fn from_model(model: &ModelState) -> Self {
        let mut net = NaiveNet {
            input: model.input_dim(),
            hidden: model.hidden_dim(),
            w1: Vec::new(),
            b1: Vec::new(),
            heads: BTreeMap::new(),
        };
        for (name, values) in model.tensors() {
            if name == "encoder.w1" {
                net.w1 = values.to_vec();
            } else if name == "encoder.b1" {
                net.b1 = values.to_vec();
            } else {
                let task = name
                    .strip_prefix("head[")
                    .and_then(|s| s.rsplit_once("]."))
                    .map(|(t, _)| t.to_string())
                    .expect("head tensor name");
                let entry = net.heads.entry(task).or_insert((Vec::new(), Vec::new(), 0));
                if name.ends_with(".w") {
                    entry.0 = values.to_vec();
                } else {
                    entry.2 = values.len();
                    entry.1 = values.to_vec();
                }
            }
        }
        net
    }

    pub fn logits(&self, task: &str, x: &[f64]) -> Vec<f64> {
        let mut h = naive_matvec(&self.w1, self.hidden, self.input, x);
        for i in 0..self.hidden {
            h[i] = (h[i] + self.b1[i]).max(0.0);
        }
        let (w, b, n) = &self.heads[task];
        let mut z = naive_matvec(w, *n, self.hidden, &h);
        for i in 0..*n {
            z[i] += b[i];
        }
        z
    }

    pub fn loss(&self, task: &str, x: &[f64], label: usize) -> f64 {
        naive_cross_entropy(&self.logits(task, x), label)
    }

    /// Mutable views in the order encoder w1, b1, then head w, b of `task`.
    fn slots(&mut self, task: &str) -> Vec<(&'static str, &mut Vec<f64>)> {
        let (w, b, _) = self.heads.get_mut(task).expect("task head");
        vec![("w1", &mut self.w1), ("b1", &mut self.b1), ("head_w", w), ("head_b", b)]
    }
}

/// Central finite differences of the loss for every encoder parameter and
/// every parameter of `task`'s head: `[w1, b1, head_w, head_b]`.
pub fn finite_difference(model: &ModelState, task: &str, x: &[f64], label: usize, eps: f64) -> OracleResult<[Vec<f64>; 4]> {
    assert!(eps > 0.0);
    let base = NaiveNet::from_model(model);
    let mut out: [Vec<f64>; 4] = Default::default();
    let sizes: Vec<usize> = base.clone().slots(task).iter().map(|(_, v)| v.len()).collect();
    for (slot, &size) in sizes.iter().enumerate() {
        for i in 0..size {
            let mut plus = base.clone();
            plus.slots(task)[slot].1[i] += eps;
            let mut minus = base.clone();
            minus.slots(task)[slot].1[i] -= eps;
            out[slot].push((plus.loss(task, x, label) - minus.loss(task, x, label)) / (2.0 * eps));
        }
    }
    oracle(out, "central differences of a loop-based forward pass")
}

/// Macro F1 from a 2×2 confusion matrix through precision and recall.
pub fn naive_macro_f1(predictions: &[usize], labels: &[usize]) -> OracleResult<f64> {
    let mut m = [[0usize; 2]; 2]; // m[truth][prediction]
    for (&p, &t) in predictions.iter().zip(labels) {
        m[t][p] += 1;
    }
    let mut f1s = [0.0; 2];
    for c in 0..2 {
        let tp = m[c][c] as f64;
        let predicted = (m[0][c] + m[1][c]) as f64;
        let actual = (m[c][0] + m[c][1]) as f64;
        if tp == 0.0 {
            continue;
        }
        let precision = tp / predicted;
        let recall = tp / actual;
        f1s[c] = 2.0 * precision * recall / (precision + recall);
    }
    oracle((f1s[0] + f1s[1]) / 2.0, "confusion matrix, precision/recall per class")
}

/// Best macro F1 over the two constant predictors, each scored from its
/// confusion matrix as `2·TP / (2·TP + FP + FN)` per class.
pub fn exhaustive_constant_baseline(labels: &[usize]) -> OracleResult<f64> {
    let mut best = f64::NEG_INFINITY;
    for c in 0..2 {
        let mut m = [[0usize; 2]; 2]; // m[truth][prediction]
        for &t in labels {
            m[t][c] += 1;
        }
        let mut total = 0.0;
        for class in 0..2 {
            let tp = m[class][class];
            let fp = m[1 - class][class];
            let fn_ = m[class][1 - class];
            if 2 * tp + fp + fn_ > 0 {
                total += (2 * tp) as f64 / (2 * tp + fp + fn_) as f64;
            }
        }
        best = best.max(total / 2.0);
    }
    oracle(best, "try both constant predictions")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

/// Group-by over ok records: collect distinct keys in one pass, then scan
/// the whole store once per key.
pub fn naive_aggregate<K: Ord + Clone>(records: &[TrialRecord], key: impl Fn(&TrialRecord) -> Option<K>) -> OracleResult<BTreeMap<K, GroupStats>> {
    let mut keys: Vec<K> = Vec::new();
    for r in records {
        if r.status != prefinetune::experiments::TrialStatus::Ok {
            continue;
        }
        if let Some(k) = key(r) {
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
    }
    let mut out = BTreeMap::new();
    for k in keys {
        let mut sum = 0.0;
        let mut n = 0usize;
        for r in records {
            if r.status == prefinetune::experiments::TrialStatus::Ok && key(r).as_ref() == Some(&k) {
                sum += r.macro_f1.expect("ok record has F1");
                n += 1;
            }
        }
        let mean = sum / n as f64;
        let mut ss = 0.0;
        for r in records {
            if r.status == prefinetune::experiments::TrialStatus::Ok && key(r).as_ref() == Some(&k) {
                ss += (r.macro_f1.unwrap() - mean).powi(2);
            }
        }
        let stderr = if n > 1 {
            (ss / (n as f64 - 1.0)).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        out.insert(k, GroupStats { mean, stderr, count: n });
    }
    oracle(out, "distinct keys, then one full scan per key")
}

fn sorted(corpora: &[String]) -> Vec<String> {
    let mut v = corpora.to_vec();
    v.sort();
    v
}

/// Unweighted mean over (speaker, emotion) cells of
/// `mean(records containing c) − mean(baseline records)`, per (k, c).
pub fn naive_contributions(records: &[TrialRecord]) -> OracleResult<BTreeMap<(usize, String), f64>> {
    let with = naive_aggregate(records, |r| Some((r.k, r.speaker.clone(), r.emotion.clone(), r.corpora.clone()))).value;
    let mut corpora: Vec<String> = Vec::new();
    for r in records {
        for c in &r.corpora {
            if !corpora.contains(c) {
                corpora.push(c.clone());
            }
        }
    }
    let mut out = BTreeMap::new();
    for c in &corpora {
        let mut per_k: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        let cells = naive_aggregate(records, |r| r.corpora.contains(c).then(|| (r.k, r.speaker.clone(), r.emotion.clone()))).value;
        for ((k, speaker, emotion), stats) in cells {
            let base = with[&(k, speaker, emotion, Vec::new())].mean;
            let e = per_k.entry(k).or_insert((0.0, 0));
            e.0 += stats.mean - base;
            e.1 += 1;
        }
        for (k, (sum, n)) in per_k {
            out.insert((k, c.clone()), sum / n as f64);
        }
    }
    oracle(out, "cell means from naive_aggregate, differenced and averaged")
}

/// `(F1_in, F1_ex)` per (k, c): controlled means of the singleton config and
/// of the config with every other corpus.
pub fn naive_inclusion_exclusion(records: &[TrialRecord], universe: &[String]) -> OracleResult<BTreeMap<(usize, String), (f64, f64)>> {
    let cells = naive_aggregate(records, |r| Some((r.k, sorted(&r.corpora), r.speaker.clone(), r.emotion.clone()))).value;
    let mut out = BTreeMap::new();
    for c in universe {
        let inc = vec![c.clone()];
        let exc: Vec<String> = sorted(&universe.iter().filter(|x| *x != c).cloned().collect::<Vec<_>>());
        let mut acc: BTreeMap<usize, [(f64, usize); 2]> = BTreeMap::new();
        for ((k, set, _, _), stats) in &cells {
            let slot = if *set == inc {
                0
            } else if *set == exc {
                1
            } else {
                continue;
            };
            let e = acc.entry(*k).or_insert([(0.0, 0); 2]);
            e[slot].0 += stats.mean;
            e[slot].1 += 1;
        }
        for (k, [(si, ni), (se, ne)]) in acc {
            out.insert((k, c.clone()), (si / ni as f64, se / ne as f64));
        }
    }
    oracle(out, "cell means from naive_aggregate, averaged per config")
}
