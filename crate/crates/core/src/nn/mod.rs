//! Minimal reverse-mode autodiff over row-major batches, plus the layers and
//! optimizer the forecasting networks are built from.

mod layers;
mod optim;
mod params;
mod tape;

pub use layers::{GruCell, Linear};
pub use optim::{clip_grad_norm, RmsProp};
pub use params::{ParamId, ParamStore, CHECKPOINT_SCHEMA_VERSION};
pub use tape::{Gradients, Mat, Tape, Var};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG used for weight initialization and sampling.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Builds a batch matrix from row slices.
pub fn rows<R: AsRef<[f64]>>(rows: &[R]) -> Mat {
    let n = rows.len();
    let w = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
    let mut m = Mat::zeros((n, w));
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.as_ref().iter().enumerate() {
            m[[i, j]] = *v;
        }
    }
    m
}
