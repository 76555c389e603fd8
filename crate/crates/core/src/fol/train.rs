use super::gaussian::{fol_nll_with_grad, raw_grad, GaussianBoxForecast, GaussianStep};
use super::{FolConfig, FolNetwork, FolSample};
use crate::error::{Error, Result};
use crate::nn::{Mat, RmsProp, Tape, Var};
use crate::par;
use crate::training::{apply_step, check_finite, epoch_batches, BestSnapshot, EpochLog, Hyper, TrainLog};

/// Mean NLL of a batch as a tape node.
fn batch_loss(net: &FolNetwork, tape: &mut Tape, batch: &[&FolSample]) -> Result<Var> {
    let raw = net.forward(tape, batch);
    let inv_b = 1.0 / batch.len() as f64;
    let residual = net.config.residual;
    let mut value = 0.0;
    let mut partials: Vec<(Var, Mat)> = raw.iter().map(|v| (*v, Mat::zeros(tape.value(*v).raw_dim()))).collect();
    for (b, sample) in batch.iter().enumerate() {
        let forecast = GaussianBoxForecast {
            steps: raw
                .iter()
                .map(|v| {
                    let y = tape.value(*v).row(b);
                    GaussianStep::from_raw_anchored(y.as_slice().expect("contiguous"), net.anchor(sample))
                })
                .collect(),
        };
        let (loss, grads) = fol_nll_with_grad(&forecast, &sample.future)?;
        value += inv_b * loss;
        for (t, g) in grads.iter().enumerate() {
            let d = raw_grad(g, residual);
            for (k, dk) in d.iter().enumerate() {
                partials[t].1[[b, k]] = inv_b * dk;
            }
        }
    }
    Ok(tape.custom(value, partials))
}

/// Mean NLL over `samples`.
pub fn fol_loss_on(net: &FolNetwork, samples: &[FolSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let chunks: Vec<&[FolSample]> = samples.chunks(32).collect();
    let losses = par::map(&chunks, |chunk| -> Result<f64> {
        let refs: Vec<&FolSample> = chunk.iter().collect();
        let mut tape = Tape::new(&net.store);
        let root = batch_loss(net, &mut tape, &refs)?;
        Ok(tape.scalar(root) * chunk.len() as f64)
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / samples.len() as f64)
}

/// Optimizes the forecast NLL with RMSProp.
pub fn train_fol(
    train: &[FolSample],
    val: &[FolSample],
    config: FolConfig,
    hyper: &Hyper,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(FolNetwork, TrainLog)> {
    if train.is_empty() {
        return Err(Error::invalid("FOL training set is empty"));
    }
    for s in train.iter().chain(val) {
        s.check()?;
        if s.future.is_empty() {
            return Err(Error::invalid(format!("{}:{} has no future boxes", s.clip_id, s.track_id)));
        }
    }
    let mut net = FolNetwork::new(config, seed);
    let mut opt = RmsProp::new(&net.store, hyper.learning_rate);
    let val_loss = |net: &FolNetwork| -> Result<Option<f64>> {
        if val.is_empty() {
            Ok(None)
        } else {
            fol_loss_on(net, val).map(Some)
        }
    };
    let mut log = TrainLog {
        initial_val_loss: val_loss(&net)?,
        epochs: Vec::new(),
        kept_epoch: None,
    };
    let mut best = BestSnapshot::default();
    let total_steps = hyper.total_steps(train.len());
    let mut step = 0usize;
    for epoch in 0..hyper.epochs {
        let mut total = 0.0;
        for idx in epoch_batches(train.len(), hyper.batch_size, seed, epoch) {
            let batch: Vec<&FolSample> = idx.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = {
                let mut tape = Tape::new(&net.store);
                let root = batch_loss(&net, &mut tape, &batch).map_err(|e| Error::Diverged {
                    stage: "train-fol".into(),
                    epoch,
                    msg: e.to_string(),
                })?;
                (tape.scalar(root), tape.backward(root).into_param_grads(&net.store))
            };
            total += check_finite(loss, "train-fol", epoch)? * batch.len() as f64;
            opt.lr = hyper.lr_at(step, total_steps);
            step += 1;
            apply_step(&mut net.store, &mut opt, grads, hyper.grad_clip, "train-fol", epoch)?;
        }
        let entry = EpochLog {
            epoch,
            train_loss: total / train.len() as f64,
            val_loss: val_loss(&net)?,
        };
        if hyper.keep_best {
            best.offer(epoch, entry.val_loss, &net.store);
        }
        on_epoch(&entry);
        log.epochs.push(entry);
    }
    if hyper.keep_best {
        log.kept_epoch = best.restore(&mut net.store);
    }
    Ok((net, log))
}
