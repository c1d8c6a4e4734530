//! Minibatch training loop.

use std::io::Write;

use rand::seq::SliceRandom;

use super::network::Network;
use super::optim::{EarlyStopping, Optimizer, OptimizerConfig, Scheduler};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// A dataset together with its loss.
pub trait Objective<T: Scalar> {
    /// Number of training items.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean loss over `items`; adds the gradient of that mean into `grads`.
    fn batch_loss(&self, net: &Network<T>, items: &[usize], grads: &mut [T]) -> Result<T>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl History {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|r| r.train_loss)
    }

    /// `epoch,train_loss,val_loss,lr` rows; a missing validation loss is empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("writing loss history", e);
        writeln!(w, "epoch,train_loss,val_loss,lr").map_err(io)?;
        for r in &self.epochs {
            let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, val, r.lr).map_err(io)?;
        }
        Ok(())
    }
}

/// Validation callback; returns the monitored loss for the current weights.
pub type Validation<'a, T> = &'a dyn Fn(&Network<T>) -> Result<f64>;

/// Trains `net` in place.
///
/// Items are shuffled every epoch from a stream derived from `config.seed`.
/// The scheduler and early stopping monitor the validation loss when a hook
/// is given, the training loss otherwise. After an early stop the weights of
/// the best epoch are restored.
pub fn train<T: Scalar, O: Objective<T> + ?Sized>(
    net: &mut Network<T>,
    objective: &O,
    config: &OptimizerConfig,
    validation: Option<Validation<'_, T>>,
) -> Result<History> {
    config.check()?;
    if objective.is_empty() {
        return Err(Error::invalid("no training items"));
    }
    let mut opt = Optimizer::new(config.optimizer, net.num_params());
    let mut sched = Scheduler::new(config.scheduler, config.learning_rate);
    let mut stopper = config.early_stop_patience.map(EarlyStopping::new);
    let mut best_params: Option<Vec<T>> = None;
    let mut history = History::default();
    let mut grads = vec![T::zero(); net.num_params()];
    let mut order: Vec<usize> = (0..objective.len()).collect();

    for epoch in 0..config.max_epochs {
        let lr = sched.begin_epoch(epoch);
        order.sort_unstable();
        order.shuffle(&mut rng::stream(config.seed, epoch as u64));
        let mut total = 0.0;
        for (b, items) in order.chunks(config.batch_size).enumerate() {
            grads.iter_mut().for_each(|g| *g = T::zero());
            let loss = objective.batch_loss(net, items, &mut grads)?.to_f64_lossy();
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            total += loss * items.len() as f64;
            opt.step(net.params_mut(), &grads, lr);
        }
        let train_loss = total / order.len() as f64;
        let val_loss = validation.map(|f| f(net)).transpose()?;
        if let Some(v) = val_loss {
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: 0 });
            }
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        let monitored = val_loss.unwrap_or(train_loss);
        sched.end_epoch(monitored);
        if let Some(es) = stopper.as_mut() {
            let (improved, stop) = es.observe(epoch, monitored);
            if improved {
                best_params = Some(net.params().to_vec());
            }
            history.best_epoch = es.best_epoch();
            if stop {
                history.stopped_early = true;
                break;
            }
        }
    }
    if history.stopped_early {
        if let Some(p) = best_params {
            net.params_mut().copy_from_slice(&p);
        }
    }
    Ok(history)
}
