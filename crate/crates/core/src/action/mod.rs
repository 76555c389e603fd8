//! Multi-head action classifier over per-agent feature sequences.
//!
//! A two-layer GRU encodes the feature sequence; eight affine heads with a
//! per-set softmax read the hidden state at every step. Heads are treated as
//! independent, so the probability of a full label tuple is the product of the
//! per-head probabilities.

mod loss;
mod map;
mod train;

pub use loss::{combined_loss, multi_task_loss, weighted_term, LabelledPrediction, MultiTaskLoss, WeightedTerm};
pub use map::{average_precision, per_frame_map, MapReport};
pub use train::{action_samples, evaluate_action, predict_actions, train_action, ActionSample};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{rng, rows, GruCell, Linear, Mat, ParamId, ParamStore, Tape, Var};
use crate::scene::{ActionVector, T_OBS};
use crate::synth::ACTION_FEATURE_DIM;
use crate::taxonomy::{CARDINALITIES, NUM_SETS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionConfig {
    pub feature_dim: usize,
    /// Backbone width `F`.
    pub hidden: usize,
    pub layers: usize,
}

impl Default for ActionConfig {
    fn default() -> Self {
        ActionConfig {
            feature_dim: ACTION_FEATURE_DIM,
            hidden: 64,
            layers: 2,
        }
    }
}

/// Per-head probability vectors.
pub type HeadProbs = Vec<Vec<f64>>;

#[derive(Debug, Clone)]
pub struct ActionModel {
    pub config: ActionConfig,
    pub store: ParamStore,
    backbone: Vec<GruCell>,
    heads: Vec<Linear>,
    /// `[1, 8]`: `s_i = log sigma_i^2` per head.
    log_vars: ParamId,
}

impl ActionModel {
    pub fn new(config: ActionConfig, seed: u64) -> Self {
        let mut r = rng(seed);
        let mut store = ParamStore::default();
        let mut backbone = Vec::new();
        let mut width = config.feature_dim;
        for l in 0..config.layers {
            backbone.push(GruCell::new(&mut store, &format!("backbone.gru{l}"), width, config.hidden, &mut r));
            width = config.hidden;
        }
        let heads = CARDINALITIES
            .iter()
            .enumerate()
            .map(|(i, &c)| Linear::new(&mut store, &format!("hid_to_pred{}", i + 1), width, c, &mut r))
            .collect();
        let log_vars = store.add("task_uncertainty.log_var", Mat::zeros((1, NUM_SETS)));
        ActionModel {
            config,
            store,
            backbone,
            heads,
            log_vars,
        }
    }

    pub fn heads(&self) -> &[Linear] {
        &self.heads
    }

    pub fn log_vars(&self) -> [f64; NUM_SETS] {
        let v = self.store.value(self.log_vars);
        std::array::from_fn(|i| v[[0, i]])
    }

    pub(crate) fn log_vars_id(&self) -> ParamId {
        self.log_vars
    }

    /// Sets every head weight and bias to zero.
    pub fn zero_heads(&mut self) {
        for h in &self.heads {
            self.store.value_mut(h.weight).fill(0.0);
            self.store.value_mut(h.bias).fill(0.0);
        }
    }

    /// Head logits at every step for a batch of equal-length sequences.
    /// `batch[b][t]` is a feature vector.
    pub(crate) fn forward(&self, tape: &mut Tape, batch: &[&[Vec<f64>]]) -> Vec<Vec<Var>> {
        let steps = batch[0].len();
        let b = batch.len();
        let mut hidden: Vec<Var> = self.backbone.iter().map(|c| tape.zeros(b, c.hidden)).collect();
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            let x: Vec<&[f64]> = batch.iter().map(|s| s[t].as_slice()).collect();
            let mut h = tape.input(rows(&x));
            for (l, cell) in self.backbone.iter().enumerate() {
                hidden[l] = cell.forward(tape, h, hidden[l]);
                h = hidden[l];
            }
            out.push(self.heads.iter().map(|head| head.forward(tape, h)).collect());
        }
        out
    }

    /// Per-step head probabilities for one sequence of any length.
    pub fn classify_sequence(&self, features: &[Vec<f64>]) -> Vec<HeadProbs> {
        if features.is_empty() {
            return Vec::new();
        }
        let mut tape = Tape::new(&self.store);
        let logits = self.forward(&mut tape, &[features]);
        logits
            .iter()
            .map(|heads| heads.iter().map(|v| softmax_row(tape.value(*v).row(0).as_slice().unwrap())).collect())
            .collect()
    }

    /// Head probabilities after observing exactly `T_OBS` feature frames.
    pub fn classify(&self, features: &[Vec<f64>]) -> Result<HeadProbs> {
        if features.len() != T_OBS {
            return Err(Error::Shape(format!(
                "expected {T_OBS} feature frames, got {}",
                features.len()
            )));
        }
        if let Some(f) = features.iter().find(|f| f.len() != self.config.feature_dim) {
            return Err(Error::Shape(format!(
                "feature width {} does not match {}",
                f.len(),
                self.config.feature_dim
            )));
        }
        Ok(self.classify_sequence(features).pop().expect("nonempty"))
    }

    pub fn to_checkpoint(&self) -> String {
        self.store
            .to_checkpoint("action", serde_json::to_value(&self.config).expect("config serialization"))
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let (_, meta) = ParamStore::checkpoint_header(text)?;
        let config: ActionConfig =
            serde_json::from_value(meta).map_err(|e| Error::Checkpoint(format!("bad action config: {e}")))?;
        let mut model = ActionModel::new(config, 0);
        model.store.load_checkpoint(text, "action")?;
        Ok(model)
    }

    /// `(layer, input width, output width)` for every affine or recurrent layer.
    pub fn layer_shapes(&self) -> Vec<(String, usize, usize)> {
        let mut out: Vec<(String, usize, usize)> = self
            .backbone
            .iter()
            .enumerate()
            .map(|(l, c)| (format!("backbone.gru{l}"), c.input, c.hidden))
            .collect();
        out.extend(
            self.heads
                .iter()
                .enumerate()
                .map(|(i, h)| (format!("hid_to_pred{}", i + 1), h.input, h.output)),
        );
        out
    }
}

pub(crate) fn softmax_row(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Probability of a full label tuple: the product over heads.
pub fn joint_probability(probs: &HeadProbs, labels: &ActionVector) -> f64 {
    (0..NUM_SETS).map(|h| probs[h][labels.get(h)]).product()
}

/// Most likely class per head.
pub fn argmax_labels(probs: &HeadProbs) -> ActionVector {
    let mut a = ActionVector::none();
    for (h, p) in probs.iter().enumerate() {
        let best = p
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        a.set(h, best);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(len: usize) -> Vec<Vec<f64>> {
        (0..len)
            .map(|t| (0..ACTION_FEATURE_DIM).map(|k| ((t * 7 + k) as f64 * 0.37).sin()).collect())
            .collect()
    }

    #[test]
    fn zero_heads_give_uniform_probabilities() {
        let mut m = ActionModel::new(ActionConfig::default(), 3);
        m.zero_heads();
        let p = m.classify(&seq(T_OBS)).unwrap();
        for (h, probs) in p.iter().enumerate() {
            assert_eq!(probs.len(), CARDINALITIES[h]);
            for v in probs {
                assert!((v - 1.0 / CARDINALITIES[h] as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn heads_are_probability_vectors_and_factorize() {
        let m = ActionModel::new(ActionConfig::default(), 4);
        let p = m.classify(&seq(T_OBS)).unwrap();
        for probs in &p {
            assert!(probs.iter().all(|v| *v >= 0.0));
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let labels = ActionVector::none().with(0, "walking");
        let joint = joint_probability(&p, &labels);
        let product: f64 = (0..NUM_SETS).map(|h| p[h][labels.get(h)]).product();
        assert_eq!(joint, product);
    }

    #[test]
    fn wrong_length_is_rejected() {
        let m = ActionModel::new(ActionConfig::default(), 0);
        assert!(m.classify(&seq(T_OBS - 1)).is_err());
    }

    #[test]
    fn head_widths_match_taxonomy() {
        let m = ActionModel::new(ActionConfig::default(), 0);
        let widths: Vec<usize> = m.heads().iter().map(|h| h.output).collect();
        assert_eq!(widths, CARDINALITIES.to_vec());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let m = ActionModel::new(ActionConfig::default(), 9);
        let back = ActionModel::from_checkpoint(&m.to_checkpoint()).unwrap();
        assert_eq!(m.classify(&seq(T_OBS)).unwrap(), back.classify(&seq(T_OBS)).unwrap());
    }
}
