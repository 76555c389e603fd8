//! Per-frame mean average precision.

use crate::error::{Error, Result};
use crate::scene::ActionVector;
use crate::taxonomy::{AgentType, CARDINALITIES, NUM_SETS};

/// Average precision of one binary ranking: frames are sorted by descending
/// score (ties keep input order) and precision is averaged over the ranks of
/// the positives. `None` when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let positives = labels.iter().filter(|l| **l).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    /// Macro-averaged AP per head; `None` when the head had no instances.
    pub per_head: [Option<f64>; NUM_SETS],
    /// AP per head and class; `None` for classes absent from the targets.
    pub per_class: Vec<Vec<Option<f64>>>,
    /// Mean over heads that had instances.
    pub overall: f64,
}

/// Per-frame mAP. Each head is scored one-vs-rest per class over the
/// instances whose agent type uses that head; classes without positives are
/// skipped in the per-head average.
pub fn per_frame_map(preds: &[Vec<Vec<f64>>], targets: &[ActionVector], types: &[AgentType]) -> Result<MapReport> {
    if preds.is_empty() {
        return Err(Error::invalid("per-frame mAP needs at least one frame"));
    }
    if preds.len() != targets.len() || preds.len() != types.len() {
        return Err(Error::Shape(format!(
            "{} predictions, {} targets, {} agent types",
            preds.len(),
            targets.len(),
            types.len()
        )));
    }
    let mut per_head = [None; NUM_SETS];
    let mut per_class = Vec::with_capacity(NUM_SETS);
    for head in 0..NUM_SETS {
        let idx: Vec<usize> = (0..preds.len()).filter(|&k| types[k].active_sets().contains(&head)).collect();
        let mut classes = vec![None; CARDINALITIES[head]];
        if !idx.is_empty() {
            for (c, slot) in classes.iter_mut().enumerate() {
                let scores: Vec<f64> = idx.iter().map(|&k| preds[k][head][c]).collect();
                let labels: Vec<bool> = idx.iter().map(|&k| targets[k].get(head) == c).collect();
                *slot = average_precision(&scores, &labels);
            }
            let present: Vec<f64> = classes.iter().flatten().copied().collect();
            if !present.is_empty() {
                per_head[head] = Some(present.iter().sum::<f64>() / present.len() as f64);
            }
        }
        per_class.push(classes);
    }
    let heads: Vec<f64> = per_head.iter().flatten().copied().collect();
    let overall = if heads.is_empty() {
        0.0
    } else {
        heads.iter().sum::<f64>() / heads.len() as f64
    };
    Ok(MapReport {
        per_head,
        per_class,
        overall,
    })
}
