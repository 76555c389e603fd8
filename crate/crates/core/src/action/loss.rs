//! Multi-task classification loss with learned per-head uncertainty.
//!
//! Each head `i` carries `s_i = log sigma_i^2`. Its term is
//! `ce_i * exp(-s_i) + s_i / 2`, which is `ce_i / sigma_i^2 + log sigma_i`
//! written in the log-variance parameterization. At `s_i = 0` the term is
//! exactly `ce_i`; for fixed `ce_i > 0` it is minimized at `sigma_i^2 = 2 ce_i`.

use crate::error::{Error, Result};
use crate::taxonomy::{AgentType, CARDINALITIES, NUM_SETS};

/// Value and partial derivatives of one uncertainty-weighted term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedTerm {
    pub value: f64,
    /// d value / d ce
    pub d_ce: f64,
    /// d value / d s
    pub d_s: f64,
}

pub fn weighted_term(ce: f64, s: f64) -> WeightedTerm {
    let w = (-s).exp();
    WeightedTerm {
        value: ce * w + 0.5 * s,
        d_ce: w,
        d_s: -ce * w + 0.5,
    }
}

/// Loss and gradients returned by [`multi_task_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskLoss {
    pub value: f64,
    /// d loss / d probs, per head (zero vectors for heads outside the subset).
    pub d_probs: Vec<Vec<f64>>,
    /// d loss / d s_i for all 8 heads.
    pub d_log_vars: [f64; NUM_SETS],
}

fn check_target(head: usize, target: usize) -> Result<()> {
    if target >= CARDINALITIES[head] {
        return Err(Error::invalid(format!(
            "target {target} out of range for head {head} (cardinality {})",
            CARDINALITIES[head]
        )));
    }
    Ok(())
}

/// `sum_{i in heads} ce_i exp(-s_i) + s_i / 2` over predicted probability
/// vectors, with `ce_i = -ln probs[i][targets[i]]`.
pub fn multi_task_loss(
    probs: &[Vec<f64>],
    targets: &[usize],
    log_vars: &[f64; NUM_SETS],
    heads: &[usize],
) -> Result<MultiTaskLoss> {
    if heads.is_empty() {
        return Err(Error::invalid("head subset must be nonempty"));
    }
    let mut value = 0.0;
    let mut d_probs: Vec<Vec<f64>> = probs.iter().map(|p| vec![0.0; p.len()]).collect();
    let mut d_log_vars = [0.0; NUM_SETS];
    for &i in heads {
        check_target(i, targets[i])?;
        let p = probs[i][targets[i]];
        let ce = -p.ln();
        let term = weighted_term(ce, log_vars[i]);
        value += term.value;
        d_probs[i][targets[i]] = -term.d_ce / p;
        d_log_vars[i] = term.d_s;
    }
    Ok(MultiTaskLoss {
        value,
        d_probs,
        d_log_vars,
    })
}

/// One labelled item of a mixed person/vehicle batch.
#[derive(Debug, Clone)]
pub struct LabelledPrediction {
    pub agent_type: AgentType,
    pub probs: Vec<Vec<f64>>,
    pub targets: [usize; NUM_SETS],
}

/// Persons contribute heads 1-5 only, vehicles heads 6-8 only; the batch loss
/// is the sum over items.
pub fn combined_loss(batch: &[LabelledPrediction], log_vars: &[f64; NUM_SETS]) -> Result<f64> {
    let mut total = 0.0;
    for item in batch {
        let heads: Vec<usize> = item.agent_type.active_sets().collect();
        total += multi_task_loss(&item.probs, &item.targets, log_vars, &heads)?.value;
    }
    Ok(total)
}

/// Cross entropy from logits: `(ce, softmax)`.
pub(crate) fn softmax_ce(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    let ce = -(logits[target] - m - sum.ln());
    (ce, probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_probs() -> Vec<Vec<f64>> {
        CARDINALITIES.iter().map(|&c| vec![1.0 / c as f64; c]).collect()
    }

    #[test]
    fn unit_variance_is_plain_cross_entropy_sum() {
        let probs = uniform_probs();
        let targets = [0usize; NUM_SETS];
        let l = multi_task_loss(&probs, &targets, &[0.0; NUM_SETS], &[0, 1, 2, 3, 4]).unwrap();
        let expected: f64 = CARDINALITIES[..5].iter().map(|&c| (c as f64).ln()).sum();
        assert!((l.value - expected).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_gives_zero() {
        let mut probs = uniform_probs();
        probs[6] = vec![0.0, 1.0, 0.0];
        let mut targets = [0usize; NUM_SETS];
        targets[6] = 1;
        let l = multi_task_loss(&probs, &targets, &[0.0; NUM_SETS], &[6]).unwrap();
        assert_eq!(l.value, 0.0);
    }

    #[test]
    fn empty_subset_and_bad_target_are_errors() {
        let probs = uniform_probs();
        assert!(multi_task_loss(&probs, &[0; NUM_SETS], &[0.0; NUM_SETS], &[]).is_err());
        let mut t = [0usize; NUM_SETS];
        t[7] = 3;
        assert!(multi_task_loss(&probs, &t, &[0.0; NUM_SETS], &[7]).is_err());
    }

    #[test]
    fn stationary_point_at_twice_the_cross_entropy() {
        for ce in [0.01f64, 0.3, 1.7, 5.0] {
            let s = (2.0 * ce).ln();
            assert!(weighted_term(ce, s).d_s.abs() < 1e-12);
            // Convex in s: neighbours are higher.
            let v = weighted_term(ce, s).value;
            assert!(weighted_term(ce, s + 0.1).value > v && weighted_term(ce, s - 0.1).value > v);
        }
    }

    #[test]
    fn softmax_ce_matches_direct() {
        let (ce, p) = softmax_ce(&[1.0, 2.0, 0.5], 1);
        let z: f64 = [1.0f64, 2.0, 0.5].iter().map(|v: &f64| v.exp()).sum::<f64>();
        assert!((ce - (z.ln() - 2.0)).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
