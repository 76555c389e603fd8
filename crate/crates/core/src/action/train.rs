use std::ops::Range;

use super::loss::{softmax_ce, weighted_term};
use super::map::{per_frame_map, MapReport};
use super::{argmax_labels, ActionConfig, ActionModel, HeadProbs};
use crate::error::{Error, Result};
use crate::nn::{Mat, RmsProp, Tape, Var};
use crate::par;
use crate::scene::{make_windows, ActionVector, Clip, T_OBS};
use crate::synth::action_features;
use crate::taxonomy::{AgentType, NUM_SETS};
use crate::training::{apply_step, check_finite, epoch_batches, BestSnapshot, EpochLog, Hyper, TrainLog};

/// One observed agent: `T_OBS` feature frames with per-frame labels.
#[derive(Debug, Clone)]
pub struct ActionSample {
    pub clip_id: String,
    pub track_id: u32,
    pub t_start: usize,
    pub agent_type: AgentType,
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<ActionVector>,
}

/// Samples for every prediction target of every window.
pub fn action_samples(clips: &[Clip], stride: usize) -> Vec<ActionSample> {
    let per_clip = par::map(clips, |clip| {
        let mut out = Vec::new();
        for w in make_windows(clip, stride) {
            for &id in &w.agents {
                let track = clip.track(id).expect("window agent exists");
                let features: Option<Vec<Vec<f64>>> = w.obs_frames().map(|t| action_features(clip, id, t)).collect();
                let targets: Option<Vec<ActionVector>> = w.obs_frames().map(|t| track.action_at(t)).collect();
                if let (Some(features), Some(targets)) = (features, targets) {
                    out.push(ActionSample {
                        clip_id: clip.clip_id.clone(),
                        track_id: id,
                        t_start: w.t_start,
                        agent_type: track.agent_type,
                        features,
                        targets,
                    });
                }
            }
        }
        out
    });
    per_clip.into_iter().flatten().collect()
}

/// Builds the loss node for a batch: the uncertainty-weighted cross entropy
/// summed over each item's active heads, averaged over items and steps.
fn batch_loss(model: &ActionModel, tape: &mut Tape, batch: &[&ActionSample]) -> Var {
    let seqs: Vec<&[Vec<f64>]> = batch.iter().map(|s| s.features.as_slice()).collect();
    let logits = model.forward(tape, &seqs);
    let s_var = tape.param(model.log_vars_id());
    let s = tape.value(s_var).clone();
    let steps = logits.len();
    let norm = 1.0 / (batch.len() * steps) as f64;
    let mut value = 0.0;
    let mut d_s = Mat::zeros((1, NUM_SETS));
    let mut partials = Vec::with_capacity(steps * NUM_SETS + 1);
    for (t, heads) in logits.iter().enumerate() {
        for (h, &var) in heads.iter().enumerate() {
            let z = tape.value(var);
            let mut dz = Mat::zeros(z.raw_dim());
            for (b, item) in batch.iter().enumerate() {
                if !item.agent_type.active_sets().contains(&h) {
                    continue;
                }
                let target = item.targets[t].get(h);
                let (ce, probs) = softmax_ce(z.row(b).as_slice().expect("contiguous"), target);
                let term = weighted_term(ce, s[[0, h]]);
                value += norm * term.value;
                d_s[[0, h]] += norm * term.d_s;
                for (c, p) in probs.iter().enumerate() {
                    let onehot = if c == target { 1.0 } else { 0.0 };
                    dz[[b, c]] = norm * term.d_ce * (p - onehot);
                }
            }
            partials.push((var, dz));
        }
    }
    partials.push((s_var, d_s));
    tape.custom(value, partials)
}

fn mean_loss(model: &ActionModel, samples: &[ActionSample], batch_size: usize) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let chunks: Vec<&[ActionSample]> = samples.chunks(batch_size.max(1)).collect();
    let losses = par::map(&chunks, |chunk| {
        let refs: Vec<&ActionSample> = chunk.iter().collect();
        let mut tape = Tape::new(&model.store);
        let l = batch_loss(model, &mut tape, &refs);
        tape.scalar(l) * chunk.len() as f64
    });
    losses.iter().sum::<f64>() / samples.len() as f64
}

/// Trains the classifier with RMSProp on minibatches of samples.
pub fn train_action(
    train: &[ActionSample],
    val: &[ActionSample],
    config: ActionConfig,
    hyper: &Hyper,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(ActionModel, TrainLog)> {
    if train.is_empty() {
        return Err(Error::invalid("action training set is empty"));
    }
    if let Some(s) = train.iter().chain(val).find(|s| s.features.len() != T_OBS || s.targets.len() != T_OBS) {
        return Err(Error::Shape(format!(
            "sample {}:{} has {} frames, expected {T_OBS}",
            s.clip_id,
            s.track_id,
            s.features.len()
        )));
    }
    let mut model = ActionModel::new(config, seed);
    let mut opt = RmsProp::new(&model.store, hyper.learning_rate);
    let mut log = TrainLog {
        initial_val_loss: (!val.is_empty()).then(|| mean_loss(&model, val, hyper.batch_size)),
        epochs: Vec::new(),
        kept_epoch: None,
    };
    let mut best = BestSnapshot::default();
    let total_steps = hyper.total_steps(train.len());
    let mut step = 0usize;
    for epoch in 0..hyper.epochs {
        let mut total = 0.0;
        for idx in epoch_batches(train.len(), hyper.batch_size, seed, epoch) {
            let batch: Vec<&ActionSample> = idx.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = {
                let mut tape = Tape::new(&model.store);
                let root = batch_loss(&model, &mut tape, &batch);
                (tape.scalar(root), tape.backward(root).into_param_grads(&model.store))
            };
            total += check_finite(loss, "train-action", epoch)? * batch.len() as f64;
            opt.lr = hyper.lr_at(step, total_steps);
            step += 1;
            apply_step(&mut model.store, &mut opt, grads, hyper.grad_clip, "train-action", epoch)?;
        }
        let entry = EpochLog {
            epoch,
            train_loss: total / train.len() as f64,
            val_loss: (!val.is_empty()).then(|| mean_loss(&model, val, hyper.batch_size)),
        };
        if hyper.keep_best {
            best.offer(epoch, entry.val_loss, &model.store);
        }
        on_epoch(&entry);
        log.epochs.push(entry);
    }
    if hyper.keep_best {
        log.kept_epoch = best.restore(&mut model.store);
    }
    Ok((model, log))
}

/// Per-frame mAP over every observation step of every sample.
pub fn evaluate_action(model: &ActionModel, samples: &[ActionSample]) -> Result<MapReport> {
    let per_sample: Vec<Vec<HeadProbs>> = par::map(samples, |s| model.classify_sequence(&s.features));
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    let mut types = Vec::new();
    for (s, probs) in samples.iter().zip(per_sample) {
        for (t, p) in probs.into_iter().enumerate() {
            preds.push(p);
            targets.push(s.targets[t]);
            types.push(s.agent_type);
        }
    }
    per_frame_map(&preds, &targets, &types)
}

/// Predicted per-frame labels for a track over `frames`, `None` on frames
/// where the track is absent. The recurrent pass starts at the first frame of
/// `frames` on which the track is present, so predictions are causal within
/// the range.
pub fn predict_actions(model: &ActionModel, clip: &Clip, track_id: u32, frames: Range<usize>) -> Vec<Option<ActionVector>> {
    let mut out = vec![None; frames.len()];
    let present: Vec<(usize, Vec<f64>)> = frames
        .clone()
        .filter_map(|t| action_features(clip, track_id, t).map(|f| (t, f)))
        .collect();
    if present.is_empty() {
        return out;
    }
    let feats: Vec<Vec<f64>> = present.iter().map(|(_, f)| f.clone()).collect();
    let probs = model.classify_sequence(&feats);
    let agent_type = clip.track(track_id).map(|t| t.agent_type);
    for ((t, _), p) in present.iter().zip(probs) {
        let mut labels = argmax_labels(&p);
        // Heads that do not apply to the agent type always read 'none'.
        if let Some(ty) = agent_type {
            for h in 0..NUM_SETS {
                if !ty.active_sets().contains(&h) {
                    labels.set(h, crate::taxonomy::none_index(h));
                }
            }
        }
        out[t - frames.start] = Some(labels);
    }
    out
}

