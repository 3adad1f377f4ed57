#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Improved,
    NoImprovement,
    Stop,
}

/// Patience-based early stopping on a loss that should decrease. Epoch 0 is
/// the first observed value; an epoch improves only if strictly below the
/// best so far.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_improvement: usize,
    observed: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_improvement: 0,
            observed: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> Progress {
        let epoch = self.observed;
        self.observed += 1;
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.since_improvement = 0;
            return Progress::Improved;
        }
        self.since_improvement += 1;
        if self.since_improvement >= self.patience {
            Progress::Stop
        } else {
            Progress::NoImprovement
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn since_improvement(&self) -> usize {
        self.since_improvement
    }
}

/// Replays a loss curve (index = epoch) and returns `(stop_epoch, best_epoch)`;
/// `stop_epoch` is `None` if the curve runs out first.
pub fn stop_epoch(curve: &[f64], patience: usize) -> (Option<usize>, usize) {
    let mut es = EarlyStopping::new(patience);
    for (e, &loss) in curve.iter().enumerate() {
        if es.observe(loss) == Progress::Stop {
            return (Some(e), es.best_epoch());
        }
    }
    (None, es.best_epoch())
}
