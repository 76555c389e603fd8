use super::{Mat, ParamStore};

/// RMSProp with the usual defaults (`alpha = 0.99`, `eps = 1e-8`).
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
    square_avg: Vec<Mat>,
}

impl RmsProp {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        RmsProp {
            lr,
            alpha: 0.99,
            eps: 1e-8,
            square_avg: store.ids().map(|id| Mat::zeros(store.value(id).raw_dim())).collect(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Mat]) {
        let (lr, alpha, eps) = (self.lr, self.alpha, self.eps);
        for ((param, grad), sq) in store.values_mut().zip(grads).zip(&mut self.square_avg) {
            ndarray::Zip::from(param).and(grad).and(sq).for_each(|p, &g, v| {
                *v = alpha * *v + (1.0 - alpha) * g * g;
                *p -= lr * g / (v.sqrt() + eps);
            });
        }
    }
}

/// Rescales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Mat], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= s;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::rows;

    #[test]
    fn rmsprop_minimizes_a_quadratic() {
        let mut store = ParamStore::default();
        let id = store.add("x", rows(&[[3.0, -2.0]]));
        let mut opt = RmsProp::new(&store, 0.05);
        for _ in 0..500 {
            let g = store.value(id).mapv(|x| 2.0 * x);
            opt.step(&mut store, &[g]);
        }
        assert!(store.value(id).iter().all(|x| x.abs() < 0.1));
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut g = vec![rows(&[[3.0, 4.0]])];
        let n = clip_grad_norm(&mut g, 1.0);
        assert_eq!(n, 5.0);
        assert!((g[0][[0, 0]] - 0.6).abs() < 1e-12);
    }
}
