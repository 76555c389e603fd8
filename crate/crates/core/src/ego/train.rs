use super::loss::ego_loss;
use super::{EgoConfig, EgoNetwork, EgoSample};
use crate::error::{Error, Result};
use crate::nn::{Mat, RmsProp, Tape, Var};
use crate::par;
use crate::training::{apply_step, check_finite, epoch_batches, BestSnapshot, EpochLog, Hyper, TrainLog};

/// Uncertainty-weighted L2 loss, summed over steps and averaged over the batch.
fn batch_loss(net: &EgoNetwork, tape: &mut Tape, batch: &[&EgoSample]) -> Result<Var> {
    let (out, _) = net.forward(tape, batch);
    let s_var = tape.param(net.log_vars_id());
    let s = tape.value(s_var);
    let log_vars = [s[[0, 0]], s[[0, 1]]];
    let inv_b = 1.0 / batch.len() as f64;
    let mut value = 0.0;
    let mut d_s = Mat::zeros((1, 2));
    let mut partials: Vec<(Var, Mat)> = out.iter().map(|v| (*v, Mat::zeros(tape.value(*v).raw_dim()))).collect();
    for (b, sample) in batch.iter().enumerate() {
        let pred: Vec<[f64; 2]> = out.iter().map(|v| [tape.value(*v)[[b, 0]], tape.value(*v)[[b, 1]]]).collect();
        let l = ego_loss(&pred, &sample.future, log_vars)?;
        value += inv_b * l.value;
        d_s[[0, 0]] += inv_b * l.d_log_vars[0];
        d_s[[0, 1]] += inv_b * l.d_log_vars[1];
        for (t, d) in l.d_pred.iter().enumerate() {
            partials[t].1[[b, 0]] = inv_b * d[0];
            partials[t].1[[b, 1]] = inv_b * d[1];
        }
    }
    partials.push((s_var, d_s));
    Ok(tape.custom(value, partials))
}

/// Mean per-sequence loss over `samples`.
pub fn ego_loss_on(net: &EgoNetwork, samples: &[EgoSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let chunks: Vec<&[EgoSample]> = samples.chunks(64).collect();
    let losses = par::map(&chunks, |chunk| -> Result<f64> {
        let refs: Vec<&EgoSample> = chunk.iter().collect();
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

/// Trains on ground-truth agent futures and actions.
pub fn train_ego(
    train: &[EgoSample],
    val: &[EgoSample],
    config: EgoConfig,
    hyper: &Hyper,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(EgoNetwork, TrainLog)> {
    if train.is_empty() {
        return Err(Error::invalid("ego training set is empty"));
    }
    for s in train.iter().chain(val) {
        s.check()?;
        if s.future.is_empty() {
            return Err(Error::invalid(format!("{}@{} has no ego future", s.clip_id, s.t_start)));
        }
    }
    let mut net = EgoNetwork::new(config, seed);
    let mut opt = RmsProp::new(&net.store, hyper.learning_rate);
    let val_loss = |net: &EgoNetwork| -> Result<Option<f64>> {
        if val.is_empty() {
            Ok(None)
        } else {
            ego_loss_on(net, val).map(Some)
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
            let batch: Vec<&EgoSample> = idx.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = {
                let mut tape = Tape::new(&net.store);
                let root = batch_loss(&net, &mut tape, &batch).map_err(|e| Error::Diverged {
                    stage: "train-ego".into(),
                    epoch,
                    msg: e.to_string(),
                })?;
                (tape.scalar(root), tape.backward(root).into_param_grads(&net.store))
            };
            total += check_finite(loss, "train-ego", epoch)? * batch.len() as f64;
            opt.lr = hyper.lr_at(step, total_steps);
            step += 1;
            apply_step(&mut net.store, &mut opt, grads, hyper.grad_clip, "train-ego", epoch)?;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ego::{ego_samples, EgoVariant, EGO_VARIANTS};
    use crate::fol::ActionSource;
    use crate::synth::{generate_clip, GeneratorConfig};

    #[test]
    fn network_gradients_match_finite_differences() {
        let cfg = GeneratorConfig::default();
        let clips: Vec<_> = (0..2).map(|i| generate_clip(&cfg, i)).collect();
        let samples = ego_samples(&clips, 10, ActionSource::GroundTruth);
        let batch: Vec<&EgoSample> = samples.iter().take(3).collect();
        assert!(batch.iter().any(|s| !s.agents.is_empty()));
        for name in EGO_VARIANTS {
            let config = EgoConfig {
                hidden: 5,
                variant: EgoVariant::parse(name).unwrap(),
            };
            let mut net = EgoNetwork::new(config, 7);
            let s = net.log_vars_id();
            net.store.value_mut(s)[[0, 0]] = 0.3;
            net.store.value_mut(s)[[0, 1]] = -0.4;
            let grads = {
                let mut tape = Tape::new(&net.store);
                let root = batch_loss(&net, &mut tape, &batch).unwrap();
                tape.backward(root).into_param_grads(&net.store)
            };
            let loss = |net: &EgoNetwork| {
                let mut tape = Tape::new(&net.store);
                let root = batch_loss(net, &mut tape, &batch).unwrap();
                tape.scalar(root)
            };
            let ids: Vec<_> = net.store.ids().collect();
            for id in ids {
                let (r, c) = net.store.value(id).dim();
                for (i, j) in [(0, 0), (r - 1, c - 1), (r / 2, c / 2)] {
                    let orig = net.store.value(id)[[i, j]];
                    let h = 1e-6;
                    net.store.value_mut(id)[[i, j]] = orig + h;
                    let up = loss(&net);
                    net.store.value_mut(id)[[i, j]] = orig - h;
                    let down = loss(&net);
                    net.store.value_mut(id)[[i, j]] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let an = grads[id.0][[i, j]];
                    assert!(
                        (fd - an).abs() <= 1e-5 * (1.0 + fd.abs().max(an.abs())),
                        "{name} {} [{i},{j}]: fd {fd} analytic {an}",
                        net.store.name(id)
                    );
                }
            }
        }
    }
}
