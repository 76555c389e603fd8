//! Uncertainty-weighted L2 loss over predicted acceleration and yaw rate.
//!
//! With `s_k = log sigma_k^2` one sequence contributes
//! `sum_t (a_t - a^_t)^2 e^{-s1} + (w_t - w^_t)^2 e^{-s2} + (s1 + s2) / 2`,
//! the last term being `log sigma1 sigma2`.

use crate::error::{Error, Result};
use crate::scene::EgoState;

#[derive(Debug, Clone, PartialEq)]
pub struct EgoLoss {
    pub value: f64,
    /// d loss / d (alpha^_t, omega^_t)
    pub d_pred: Vec<[f64; 2]>,
    /// d loss / d (s1, s2)
    pub d_log_vars: [f64; 2],
}

pub fn ego_loss(pred: &[[f64; 2]], truth: &[EgoState], log_vars: [f64; 2]) -> Result<EgoLoss> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "{} predicted steps, {} true steps",
            pred.len(),
            truth.len()
        )));
    }
    if pred.iter().flatten().any(|v| !v.is_finite())
        || truth.iter().any(|e| !e.alpha.is_finite() || !e.omega.is_finite())
        || log_vars.iter().any(|v| !v.is_finite())
    {
        return Err(Error::invalid("ego loss input is not finite"));
    }
    let w = [(-log_vars[0]).exp(), (-log_vars[1]).exp()];
    let mut sq = [0.0; 2];
    let mut d_pred = Vec::with_capacity(pred.len());
    for (p, e) in pred.iter().zip(truth) {
        let err = [p[0] - e.alpha, p[1] - e.omega];
        sq[0] += err[0] * err[0];
        sq[1] += err[1] * err[1];
        d_pred.push([2.0 * err[0] * w[0], 2.0 * err[1] * w[1]]);
    }
    Ok(EgoLoss {
        value: sq[0] * w[0] + sq[1] * w[1] + 0.5 * (log_vars[0] + log_vars[1]),
        d_pred,
        d_log_vars: [0.5 - sq[0] * w[0], 0.5 - sq[1] * w[1]],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn es(v: &[(f64, f64)]) -> Vec<EgoState> {
        v.iter().map(|&(alpha, omega)| EgoState { alpha, omega }).collect()
    }

    #[test]
    fn perfect_prediction_is_zero_at_unit_variance() {
        let truth = es(&[(0.5, 0.01), (-1.0, 0.0)]);
        let pred = [[0.5, 0.01], [-1.0, 0.0]];
        assert_eq!(ego_loss(&pred, &truth, [0.0, 0.0]).unwrap().value, 0.0);
    }

    #[test]
    fn unit_variance_is_sum_of_squares() {
        let truth = es(&[(0.5, 0.01), (-1.0, 0.0)]);
        let pred = [[0.0, 0.02], [1.0, -0.1]];
        let l = ego_loss(&pred, &truth, [0.0, 0.0]).unwrap();
        let expected = 0.25 + 1e-4 + 4.0 + 0.01;
        assert!((l.value - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatch_and_nan() {
        let truth = es(&[(0.0, 0.0)]);
        assert!(ego_loss(&[[0.0, 0.0], [0.0, 0.0]], &truth, [0.0, 0.0]).is_err());
        assert!(ego_loss(&[[f64::NAN, 0.0]], &truth, [0.0, 0.0]).is_err());
    }
}
