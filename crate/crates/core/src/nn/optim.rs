//! Optimizers, learning-rate schedules and early stopping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Rmsprop { decay: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn rmsprop() -> Self {
        OptimizerKind::Rmsprop { decay: 0.99, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerConfig {
    Constant,
    /// Multiply by `factor` every `period` epochs.
    Step { period: usize, factor: f64 },
    /// Multiply by `factor` after `patience` epochs without improvement.
    Plateau { patience: usize, factor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub scheduler: SchedulerConfig,
    pub early_stop_patience: Option<usize>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        match self.scheduler {
            SchedulerConfig::Step { period, factor } | SchedulerConfig::Plateau { patience: period, factor } => {
                if period == 0 {
                    return bad("scheduler period/patience must be at least 1");
                }
                if !(factor > 0.0 && factor < 1.0) {
                    return bad("scheduler factor must lie in (0, 1)");
                }
            }
            SchedulerConfig::Constant => {}
        }
        if self.early_stop_patience == Some(0) {
            return bad("early-stop patience must be at least 1");
        }
        match self.optimizer {
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                    return bad("adam constants out of range");
                }
            }
            OptimizerKind::Rmsprop { decay, eps } => {
                if !(0.0..1.0).contains(&decay) || !(eps > 0.0) {
                    return bad("rmsprop constants out of range");
                }
            }
        }
        Ok(())
    }
}

/// Per-parameter optimizer state.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, params: usize) -> Self {
        Optimizer {
            kind,
            m: vec![T::zero(); params],
            v: vec![T::zero(); params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let lr = c::<T>(lr);
        match self.kind {
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let (b1, b2, eps) = (c::<T>(beta1), c::<T>(beta2), c::<T>(eps));
                let bc1 = T::one() - c::<T>(beta1.powi(self.t as i32));
                let bc2 = T::one() - c::<T>(beta2.powi(self.t as i32));
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
                    self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
                    let mh = self.m[i] / bc1;
                    let vh = self.v[i] / bc2;
                    params[i] -= lr * mh / (vh.sqrt() + eps);
                }
            }
            OptimizerKind::Rmsprop { decay, eps } => {
                let (d, eps) = (c::<T>(decay), c::<T>(eps));
                for i in 0..params.len() {
                    let g = grads[i];
                    self.v[i] = d * self.v[i] + (T::one() - d) * g * g;
                    params[i] -= lr * g / (self.v[i].sqrt() + eps);
                }
            }
        }
    }
}

/// Learning-rate schedule, queried once per epoch.
#[derive(Debug, Clone)]
pub struct Scheduler {
    config: SchedulerConfig,
    lr0: f64,
    lr: f64,
    best: f64,
    stale: usize,
}

impl Scheduler {
    pub fn new(config: SchedulerConfig, lr0: f64) -> Self {
        Scheduler {
            config,
            lr0,
            lr: lr0,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Learning rate to use for `epoch` (0-based) under a step schedule.
    pub fn begin_epoch(&mut self, epoch: usize) -> f64 {
        if let SchedulerConfig::Step { period, factor } = self.config {
            self.lr = self.lr0 * factor.powi((epoch / period) as i32);
        }
        self.lr
    }

    /// Feeds the monitored loss at the end of an epoch.
    pub fn end_epoch(&mut self, monitored: f64) {
        if let SchedulerConfig::Plateau { patience, factor } = self.config {
            if monitored < self.best {
                self.best = monitored;
                self.stale = 0;
            } else {
                self.stale += 1;
                if self.stale >= patience {
                    self.lr *= factor;
                    self.stale = 0;
                }
            }
        }
    }
}

/// Tracks the best monitored value and says when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, monitored: f64) -> (bool, bool) {
        if monitored < self.best {
            self.best = monitored;
            self.best_epoch = Some(epoch);
            return (true, false);
        }
        let since = self.best_epoch.map_or(epoch + 1, |b| epoch - b);
        (false, since >= self.patience)
    }
}
