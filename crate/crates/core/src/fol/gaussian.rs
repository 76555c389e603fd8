//! Two bivariate Gaussians per future step (center and dimension) and their
//! negative log-likelihood.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::scene::BBox;

pub const SIGMA_MIN: f64 = 1e-3;
pub const SIGMA_MAX: f64 = 0.5;
pub const RHO_MAX: f64 = 0.99;
/// Raw decoder outputs per step.
pub const RAW_WIDTH: usize = 10;
/// Half-width of the offset range in residual mode, normalized units.
pub const RESIDUAL_SPAN: f64 = 0.5;

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bivariate {
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
    pub rho: f64,
}

impl Bivariate {
    /// Maps raw sigmoid outputs `(y_mu1, y_mu2, y_s1, y_s2, y_rho)` into the
    /// parameter box.
    pub fn from_raw(y: &[f64]) -> Self {
        let sig = |v: f64| SIGMA_MIN + v * (SIGMA_MAX - SIGMA_MIN);
        Bivariate {
            mu: [y[0], y[1]],
            sigma: [sig(y[2]), sig(y[3])],
            rho: 2.0 * RHO_MAX * y[4] - RHO_MAX,
        }
    }

    pub fn nll(&self, x: [f64; 2]) -> f64 {
        bivariate_nll(self, x).0
    }
}

/// Negative log density and its gradient with respect to
/// `(mu1, mu2, sigma1, sigma2, rho)`.
pub fn bivariate_nll(g: &Bivariate, x: [f64; 2]) -> (f64, [f64; 5]) {
    let [s1, s2] = g.sigma;
    let rho = g.rho;
    let d1 = x[0] - g.mu[0];
    let d2 = x[1] - g.mu[1];
    let q = 1.0 - rho * rho;
    let n1 = d1 / s1;
    let n2 = d2 / s2;
    let z = n1 * n1 + n2 * n2 - 2.0 * rho * n1 * n2;
    let value = LOG_2PI + s1.ln() + s2.ln() + 0.5 * q.ln() + z / (2.0 * q);
    let d_mu1 = -(n1 - rho * n2) / (s1 * q);
    let d_mu2 = -(n2 - rho * n1) / (s2 * q);
    let d_s1 = 1.0 / s1 - (n1 * n1 - rho * n1 * n2) / (s1 * q);
    let d_s2 = 1.0 / s2 - (n2 * n2 - rho * n1 * n2) / (s2 * q);
    let d_rho = -rho / q - n1 * n2 / q + rho * z / (q * q);
    (value, [d_mu1, d_mu2, d_s1, d_s2, d_rho])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianStep {
    pub center: Bivariate,
    pub size: Bivariate,
}

impl GaussianStep {
    pub fn from_raw(y: &[f64]) -> Self {
        GaussianStep {
            center: Bivariate::from_raw(&y[..5]),
            size: Bivariate::from_raw(&y[5..10]),
        }
    }

    /// Residual mode: means are offsets `RESIDUAL_SPAN * (2y - 1)` from
    /// `anchor` (the last observed box); spreads and correlations map as in
    /// [`GaussianStep::from_raw`].
    pub fn from_raw_anchored(y: &[f64], anchor: Option<[f64; 4]>) -> Self {
        let mut step = GaussianStep::from_raw(y);
        if let Some(a) = anchor {
            let off = |v: f64| RESIDUAL_SPAN * (2.0 * v - 1.0);
            step.center.mu = [a[0] + off(y[0]), a[1] + off(y[1])];
            step.size.mu = [a[2] + off(y[5]), a[3] + off(y[6])];
        }
        step
    }

    pub fn mean_box(&self) -> BBox {
        BBox::new(self.center.mu[0], self.center.mu[1], self.size.mu[0], self.size.mu[1])
    }
}

/// Per-step forecast for one agent over the prediction horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBoxForecast {
    pub steps: Vec<GaussianStep>,
}

impl GaussianBoxForecast {
    pub fn from_raw(raw: &[[f64; RAW_WIDTH]]) -> Self {
        GaussianBoxForecast {
            steps: raw.iter().map(|y| GaussianStep::from_raw(y)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn check_truth(forecast_len: usize, truth: &[BBox]) -> Result<()> {
    if forecast_len != truth.len() || truth.is_empty() {
        return Err(Error::Shape(format!(
            "forecast has {forecast_len} steps, truth has {}",
            truth.len()
        )));
    }
    if truth.iter().any(|b| !b.is_finite()) {
        return Err(Error::invalid("truth contains non-finite box values"));
    }
    Ok(())
}

/// `-(1/T) sum_t [log p(c_t) + log p(l_t)]`.
pub fn fol_nll_loss(forecast: &GaussianBoxForecast, truth: &[BBox]) -> Result<f64> {
    Ok(fol_nll_with_grad(forecast, truth)?.0)
}

/// The loss together with its gradient with respect to every step's ten
/// distribution parameters, laid out as
/// `(mu_cu, mu_cv, s_cu, s_cv, rho_c, mu_lu, mu_lv, s_lu, s_lv, rho_l)`.
pub fn fol_nll_with_grad(forecast: &GaussianBoxForecast, truth: &[BBox]) -> Result<(f64, Vec<[f64; RAW_WIDTH]>)> {
    check_truth(forecast.len(), truth)?;
    let inv_t = 1.0 / truth.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(truth.len());
    for (step, b) in forecast.steps.iter().zip(truth) {
        let (vc, gc) = bivariate_nll(&step.center, [b.cu, b.cv]);
        let (vl, gl) = bivariate_nll(&step.size, [b.lu, b.lv]);
        total += inv_t * (vc + vl);
        let mut g = [0.0; RAW_WIDTH];
        for k in 0..5 {
            g[k] = inv_t * gc[k];
            g[5 + k] = inv_t * gl[k];
        }
        grads.push(g);
    }
    if !total.is_finite() {
        return Err(Error::invalid("negative log-likelihood is not finite"));
    }
    Ok((total, grads))
}

/// Chain rule through the output transform: gradient with respect to the raw
/// sigmoid outputs given the gradient with respect to parameters.
pub fn raw_grad(param_grad: &[f64; RAW_WIDTH], residual: bool) -> [f64; RAW_WIDTH] {
    let mu = if residual { 2.0 * RESIDUAL_SPAN } else { 1.0 };
    let scale = [
        mu,
        mu,
        SIGMA_MAX - SIGMA_MIN,
        SIGMA_MAX - SIGMA_MIN,
        2.0 * RHO_MAX,
    ];
    std::array::from_fn(|k| param_grad[k] * scale[k % 5])
}

fn sample_bivariate(g: &Bivariate, rng: &mut ChaCha8Rng) -> [f64; 2] {
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    [
        g.mu[0] + g.sigma[0] * z1,
        g.mu[1] + g.sigma[1] * (g.rho * z1 + (1.0 - g.rho * g.rho).sqrt() * z2),
    ]
}

/// Draws `k` trajectories; centers and dimensions are sampled independently.
/// Sampled dimensions are floored at zero. Deterministic in `seed`; sample `n`
/// uses its own stream so the result does not depend on scheduling.
pub fn sample_future(forecast: &GaussianBoxForecast, k: usize, seed: u64) -> Vec<Vec<BBox>> {
    par::map_range(k, |n| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(n as u64);
        forecast
            .steps
            .iter()
            .map(|s| {
                let c = sample_bivariate(&s.center, &mut rng);
                let l = sample_bivariate(&s.size, &mut rng);
                BBox::new(c[0], c[1], l[0].max(0.0), l[1].max(0.0))
            })
            .collect()
    })
}

/// The mean trajectory.
pub fn predict_mean(forecast: &GaussianBoxForecast) -> Vec<BBox> {
    forecast.steps.iter().map(GaussianStep::mean_box).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Bivariate {
        Bivariate {
            mu: [0.3, 0.6],
            sigma: [1.0, 1.0],
            rho: 0.0,
        }
    }

    #[test]
    fn density_at_mode_with_unit_sigma() {
        assert!((unit().nll([0.3, 0.6]) - (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_correlation_factorizes() {
        let g = Bivariate {
            mu: [0.2, 0.7],
            sigma: [0.05, 0.2],
            rho: 0.0,
        };
        let x = [0.25, 0.4];
        let uni = |d: f64, s: f64| 0.5 * (2.0 * std::f64::consts::PI).ln() + s.ln() + d * d / (2.0 * s * s);
        let expected = uni(0.05, 0.05) + uni(-0.3, 0.2);
        assert!((g.nll(x) - expected).abs() < 1e-9);
    }

    #[test]
    fn mean_is_stationary() {
        let g = Bivariate {
            mu: [0.4, 0.5],
            sigma: [0.1, 0.3],
            rho: 0.6,
        };
        let (_, grad) = bivariate_nll(&g, g.mu);
        assert!(grad[0].abs() < 1e-15 && grad[1].abs() < 1e-15);
    }

    #[test]
    fn raw_midpoint_mapping() {
        let s = GaussianStep::from_raw(&[0.5; RAW_WIDTH]);
        assert_eq!(s.center.mu, [0.5, 0.5]);
        assert!((s.center.sigma[0] - (SIGMA_MIN + SIGMA_MAX) / 2.0).abs() < 1e-15);
        assert!(s.center.rho.abs() < 1e-15);
    }

    #[test]
    fn sampling_is_seeded_and_tight_at_the_lower_clamp() {
        let step = GaussianStep::from_raw(&[0.4, 0.6, 0.0, 0.0, 0.5, 0.1, 0.2, 0.0, 0.0, 0.5]);
        let f = GaussianBoxForecast { steps: vec![step; 3] };
        let a = sample_future(&f, 5, 11);
        assert_eq!(a, sample_future(&f, 5, 11));
        for traj in &a {
            for b in traj {
                assert!((b.cu - 0.4).abs() < 6e-3 && (b.cv - 0.6).abs() < 6e-3);
            }
        }
        assert_eq!(predict_mean(&f)[0], BBox::new(0.4, 0.6, 0.1, 0.2));
    }

    #[test]
    fn length_mismatch_and_nan_rejected() {
        let f = GaussianBoxForecast {
            steps: vec![GaussianStep::from_raw(&[0.5; RAW_WIDTH]); 2],
        };
        assert!(fol_nll_loss(&f, &[BBox::new(0.5, 0.5, 0.1, 0.1)]).is_err());
        let nan = BBox::new(f64::NAN, 0.5, 0.1, 0.1);
        assert!(fol_nll_loss(&f, &[nan, nan]).is_err());
    }
}
