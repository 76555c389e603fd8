//! Shared optimization plumbing: hyperparameters, epoch logs, minibatching.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, rng, Mat, ParamStore, RmsProp};

/// Optimizer settings for one training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyper {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Keep the weights of the epoch with the lowest validation loss instead
    /// of the last epoch's.
    #[serde(default)]
    pub keep_best: bool,
    /// Optimizer steps over which the learning rate ramps up linearly from 0.
    #[serde(default)]
    pub warmup_steps: usize,
    /// Learning rate at the last step as a fraction of `learning_rate`,
    /// reached by linear decay after warmup. 1 keeps it constant.
    #[serde(default = "one")]
    pub final_lr_fraction: f64,
}

fn one() -> f64 {
    1.0
}

impl Hyper {
    pub fn validate(&self, prefix: &str) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            errs.push(format!("{prefix}.learning_rate: must be positive"));
        }
        if self.batch_size == 0 {
            errs.push(format!("{prefix}.batch_size: must be positive"));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            errs.push(format!("{prefix}.final_lr_fraction: must lie in (0, 1]"));
        }
        if self.grad_clip < 0.0 {
            errs.push(format!("{prefix}.grad_clip: must be non-negative"));
        }
        errs
    }
}

impl Hyper {
    /// Learning rate for optimizer step `step` out of `total`.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        let warm = if self.warmup_steps > 0 {
            ((step + 1) as f64 / self.warmup_steps as f64).min(1.0)
        } else {
            1.0
        };
        let decay_span = total.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = (step.saturating_sub(self.warmup_steps) as f64 / decay_span).min(1.0);
        self.learning_rate * warm * (1.0 - progress * (1.0 - self.final_lr_fraction))
    }

    pub fn total_steps(&self, n: usize) -> usize {
        self.epochs * n.div_ceil(self.batch_size.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub initial_val_loss: Option<f64>,
    pub epochs: Vec<EpochLog>,
    /// Epoch whose weights were kept, when selecting on validation loss.
    #[serde(default)]
    pub kept_epoch: Option<usize>,
}

impl TrainLog {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.val_loss)
    }
}

/// Shuffled minibatches of indices for one epoch, deterministic in
/// `(seed, epoch)`.
pub fn epoch_batches(n: usize, batch: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut r = rng(seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(epoch as u64));
    idx.shuffle(&mut r);
    idx.chunks(batch.max(1)).map(|c| c.to_vec()).collect()
}

/// Clips and applies one optimizer step, rejecting non-finite gradients.
pub fn apply_step(
    store: &mut ParamStore,
    opt: &mut RmsProp,
    mut grads: Vec<Mat>,
    grad_clip: f64,
    stage: &str,
    epoch: usize,
) -> Result<()> {
    let norm = if grad_clip > 0.0 {
        clip_grad_norm(&mut grads, grad_clip)
    } else {
        grads.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
    };
    if !norm.is_finite() {
        return Err(Error::Diverged {
            stage: stage.into(),
            epoch,
            msg: format!("non-finite gradient norm {norm}"),
        });
    }
    opt.step(store, &grads);
    Ok(())
}

pub fn check_finite(loss: f64, stage: &str, epoch: usize) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Diverged {
            stage: stage.into(),
            epoch,
            msg: format!("loss became {loss}"),
        })
    }
}

/// Tracks the lowest validation loss seen and a snapshot of the weights
/// that produced it.
#[derive(Debug, Default)]
pub struct BestSnapshot {
    best: Option<(usize, f64, Vec<Mat>)>,
}

impl BestSnapshot {
    pub fn offer(&mut self, epoch: usize, val_loss: Option<f64>, store: &ParamStore) {
        let Some(v) = val_loss else { return };
        if self.best.as_ref().is_none_or(|(_, b, _)| v < *b) {
            self.best = Some((epoch, v, store.ids().map(|id| store.value(id).clone()).collect()));
        }
    }

    /// Restores the best weights, returning their epoch.
    pub fn restore(self, store: &mut ParamStore) -> Option<usize> {
        let (epoch, _, values) = self.best?;
        for (dst, src) in store.values_mut().zip(values) {
            *dst = src;
        }
        Some(epoch)
    }
}
