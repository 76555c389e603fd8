//! Pairwise interaction encoding of a target agent against everyone else in
//! the scene at one observation step.
//!
//! At each step the pairs `(i, j)` are embedded and chained through one
//! recurrent pass in ascending `track_id` of `j`, starting from a zero state.
//! The interaction feature is the mean of the hidden states recorded after
//! each pair, or zero when the target is alone.

use rand::Rng;

use crate::nn::{rows, GruCell, Linear, Mat, ParamStore, Tape, Var};
use crate::scene::{ActionVector, BBox};

/// Width of `(x_i, a_i, x_j, a_j)`.
pub const PAIR_WIDTH: usize = 24;
/// Width of `(x_i, x_j)` when action priors are disabled.
pub const PAIR_WIDTH_NO_ACTIONS: usize = 8;

/// Another agent present at the same step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partner {
    pub track_id: u32,
    pub bbox: BBox,
    pub action: ActionVector,
}

/// Concatenation `x_i, a_i, x_j, a_j` with actions normalized per set. Without
/// actions the result is `x_i, x_j`.
pub fn pair_feature(x_i: BBox, a_i: &ActionVector, x_j: BBox, a_j: &ActionVector, with_actions: bool) -> Vec<f64> {
    let mut v = Vec::with_capacity(PAIR_WIDTH);
    v.extend(x_i.to_array());
    if with_actions {
        v.extend(a_i.normalized());
    }
    v.extend(x_j.to_array());
    if with_actions {
        v.extend(a_j.normalized());
    }
    v
}

/// Pair features of `target` against `others` (the target itself excluded),
/// in ascending partner `track_id`.
pub fn canonical_pairs(
    target_id: u32,
    x_i: BBox,
    a_i: &ActionVector,
    others: &[Partner],
    with_actions: bool,
) -> Vec<Vec<f64>> {
    let mut sorted: Vec<&Partner> = others.iter().filter(|p| p.track_id != target_id).collect();
    sorted.sort_by_key(|p| p.track_id);
    sorted
        .into_iter()
        .map(|p| pair_feature(x_i, a_i, p.bbox, &p.action, with_actions))
        .collect()
}

#[derive(Debug, Clone)]
pub struct InteractionEncoder {
    pub embed: Linear,
    pub cell: GruCell,
    pub with_actions: bool,
}

impl InteractionEncoder {
    pub fn new(store: &mut ParamStore, prefix: &str, hidden: usize, with_actions: bool, rng: &mut impl Rng) -> Self {
        let width = if with_actions { PAIR_WIDTH } else { PAIR_WIDTH_NO_ACTIONS };
        InteractionEncoder {
            embed: Linear::new(store, &format!("{prefix}.embed.Linear_0"), width, hidden, rng),
            cell: GruCell::new(store, &format!("{prefix}.encode.GRUCell_enc"), hidden, hidden, rng),
            with_actions,
        }
    }

    pub fn hidden(&self) -> usize {
        self.cell.hidden
    }

    pub fn param_count(&self) -> usize {
        self.embed.param_count() + self.cell.param_count()
    }

    /// Interaction features for a batch of targets. `batch[b]` holds the
    /// already canonically ordered pair features of target `b`; lists may
    /// differ in length. Returns `[B, hidden]`.
    pub fn encode(&self, tape: &mut Tape, batch: &[Vec<Vec<f64>>]) -> Var {
        let b = batch.len();
        let longest = batch.iter().map(Vec::len).max().unwrap_or(0);
        let mut psi = tape.zeros(b, self.hidden());
        if longest == 0 {
            return psi;
        }
        let width = self.embed.input;
        let mut h = tape.zeros(b, self.hidden());
        let mut terms = Vec::with_capacity(longest + 1);
        terms.push(psi);
        for k in 0..longest {
            let mut x = Mat::zeros((b, width));
            let mut weights = vec![0.0; b];
            for (row, pairs) in batch.iter().enumerate() {
                if let Some(f) = pairs.get(k) {
                    x.row_mut(row).assign(&ndarray::ArrayView1::from(f.as_slice()));
                    weights[row] = 1.0 / pairs.len() as f64;
                }
            }
            let xv = tape.input(x);
            let v = self.embed.forward_relu(tape, xv);
            h = self.cell.forward(tape, v, h);
            terms.push(tape.scale_rows(h, weights));
        }
        psi = tape.sum(&terms);
        psi
    }

    /// Embedded pair feature `relu(W v + b)` for one pair.
    pub fn embed_pair(&self, store: &ParamStore, feature: &[f64]) -> Vec<f64> {
        let mut tape = Tape::new(store);
        let x = tape.input(rows(&[feature]));
        let y = self.embed.forward_relu(&mut tape, x);
        tape.value(y).row(0).to_vec()
    }

    /// Hidden states recorded after each pair of a single recurrent pass.
    pub fn hidden_trace(&self, store: &ParamStore, pairs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut tape = Tape::new(store);
        let mut h = tape.zeros(1, self.hidden());
        let mut out = Vec::with_capacity(pairs.len());
        for f in pairs {
            let x = tape.input(rows(&[f]));
            let v = self.embed.forward_relu(&mut tape, x);
            h = self.cell.forward(&mut tape, v, h);
            out.push(tape.value(h).row(0).to_vec());
        }
        out
    }

    /// The interaction feature of one target at one step.
    pub fn encode_interactions(
        &self,
        store: &ParamStore,
        target_id: u32,
        x_i: BBox,
        a_i: &ActionVector,
        others: &[Partner],
    ) -> Vec<f64> {
        let pairs = canonical_pairs(target_id, x_i, a_i, others, self.with_actions);
        let mut tape = Tape::new(store);
        let psi = self.encode(&mut tape, &[pairs]);
        tape.value(psi).row(0).to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::rng;

    fn encoder(seed: u64) -> (ParamStore, InteractionEncoder) {
        let mut store = ParamStore::default();
        let enc = InteractionEncoder::new(&mut store, "int_encoder", 16, true, &mut rng(seed));
        (store, enc)
    }

    fn partner(id: u32, c: f64) -> Partner {
        Partner {
            track_id: id,
            bbox: BBox::new(c, 0.5, 0.02, 0.1),
            action: ActionVector::none().with(0, "walking"),
        }
    }

    #[test]
    fn pair_feature_order_and_width() {
        let a = ActionVector::none();
        let f = pair_feature(BBox::new(0.1, 0.2, 0.3, 0.4), &a, BBox::new(0.5, 0.6, 0.7, 0.8), &a, true);
        assert_eq!(f.len(), PAIR_WIDTH);
        assert_eq!(&f[..4], &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(&f[4..12], &[1.0; 8]);
        assert_eq!(&f[12..16], &[0.5, 0.6, 0.7, 0.8]);
        let g = pair_feature(BBox::new(0.1, 0.2, 0.3, 0.4), &a, BBox::new(0.5, 0.6, 0.7, 0.8), &a, false);
        assert_eq!(g, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
    }

    #[test]
    fn zero_weights_give_zero_embedding() {
        let (mut store, enc) = encoder(1);
        store.fill(0.0);
        let e = enc.embed_pair(&store, &[0.0; PAIR_WIDTH]);
        assert!(e.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn alone_gives_zero_and_single_partner_gives_its_state() {
        let (store, enc) = encoder(2);
        let me = partner(1, 0.3);
        let psi = enc.encode_interactions(&store, 1, me.bbox, &me.action, &[me]);
        assert!(psi.iter().all(|v| *v == 0.0));
        let other = partner(5, 0.6);
        let psi = enc.encode_interactions(&store, 1, me.bbox, &me.action, &[other]);
        let pairs = canonical_pairs(1, me.bbox, &me.action, &[other], true);
        let trace = enc.hidden_trace(&store, &pairs);
        assert_eq!(psi, trace[0]);
    }

    #[test]
    fn mean_of_recorded_states_and_order_invariance() {
        let (store, enc) = encoder(3);
        let me = partner(2, 0.4);
        let others = [partner(9, 0.1), partner(4, 0.7), partner(6, 0.9)];
        let psi = enc.encode_interactions(&store, 2, me.bbox, &me.action, &others);
        let pairs = canonical_pairs(2, me.bbox, &me.action, &others, true);
        let trace = enc.hidden_trace(&store, &pairs);
        for (k, v) in psi.iter().enumerate() {
            let mean: f64 = trace.iter().map(|h| h[k]).sum::<f64>() / 3.0;
            assert!((v - mean).abs() < 1e-12);
        }
        let shuffled = [others[2], others[0], others[1]];
        assert_eq!(psi, enc.encode_interactions(&store, 2, me.bbox, &me.action, &shuffled));
    }

    #[test]
    fn padded_batch_matches_individual_encoding() {
        let (store, enc) = encoder(4);
        let me = partner(1, 0.5);
        let sets: Vec<Vec<Partner>> = vec![vec![], vec![partner(3, 0.2)], vec![partner(3, 0.2), partner(7, 0.8)]];
        let batch: Vec<Vec<Vec<f64>>> = sets
            .iter()
            .map(|o| canonical_pairs(1, me.bbox, &me.action, o, true))
            .collect();
        let mut tape = Tape::new(&store);
        let psi = enc.encode(&mut tape, &batch);
        for (row, o) in sets.iter().enumerate() {
            let single = enc.encode_interactions(&store, 1, me.bbox, &me.action, o);
            for (k, v) in single.iter().enumerate() {
                assert!((tape.value(psi)[[row, k]] - v).abs() < 1e-12);
            }
        }
    }
}
