use rand::Rng;

use super::{Mat, ParamId, ParamStore, Tape, Var};

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Mat {
    Mat::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

/// Affine map `x W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    /// Registers `{name}.weight` `[input, output]` and `{name}.bias`
    /// `[1, output]`, initialized uniformly in `±1/sqrt(input)`.
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), uniform(rng, input, output, bound));
        let bias = store.add(format!("{name}.bias"), uniform(rng, 1, output, bound));
        Linear {
            weight,
            bias,
            input,
            output,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        debug_assert_eq!(tape.value(x).ncols(), self.input, "linear input width");
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let xw = tape.matmul(x, w);
        tape.add_row(xw, b)
    }

    pub fn forward_relu(&self, tape: &mut Tape, x: Var) -> Var {
        let y = self.forward(tape, x);
        tape.relu(y)
    }

    pub fn param_count(&self) -> usize {
        self.input * self.output + self.output
    }
}

/// Gated recurrent unit cell with reset, update and candidate gates stacked
/// column-wise in that order.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_ih = store.add(format!("{name}.w_ih"), uniform(rng, input, 3 * hidden, bound));
        let w_hh = store.add(format!("{name}.w_hh"), uniform(rng, hidden, 3 * hidden, bound));
        let b_ih = store.add(format!("{name}.b_ih"), uniform(rng, 1, 3 * hidden, bound));
        let b_hh = store.add(format!("{name}.b_hh"), uniform(rng, 1, 3 * hidden, bound));
        GruCell {
            w_ih,
            w_hh,
            b_ih,
            b_hh,
            input,
            hidden,
        }
    }

    /// One step: returns the next hidden state.
    pub fn forward(&self, tape: &mut Tape, x: Var, h: Var) -> Var {
        let n = self.hidden;
        let (w_ih, w_hh, b_ih, b_hh) = (
            tape.param(self.w_ih),
            tape.param(self.w_hh),
            tape.param(self.b_ih),
            tape.param(self.b_hh),
        );
        let gi = tape.matmul(x, w_ih);
        let gi = tape.add_row(gi, b_ih);
        let gh = tape.matmul(h, w_hh);
        let gh = tape.add_row(gh, b_hh);

        let gi_r = tape.cols(gi, 0, n);
        let gh_r = tape.cols(gh, 0, n);
        let r = tape.add(gi_r, gh_r);
        let r = tape.sigmoid(r);

        let gi_z = tape.cols(gi, n, n);
        let gh_z = tape.cols(gh, n, n);
        let z = tape.add(gi_z, gh_z);
        let z = tape.sigmoid(z);

        let gi_n = tape.cols(gi, 2 * n, n);
        let gh_n = tape.cols(gh, 2 * n, n);
        let rn = tape.mul(r, gh_n);
        let cand = tape.add(gi_n, rn);
        let cand = tape.tanh(cand);

        // h' = (1 - z) * n + z * h = n + z * (h - n)
        let diff = tape.sub(h, cand);
        let zd = tape.mul(z, diff);
        tape.add(cand, zd)
    }

    pub fn param_count(&self) -> usize {
        3 * self.hidden * (self.input + self.hidden + 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{rng, rows};

    #[test]
    fn zero_weight_gru_halves_the_state() {
        // With all weights zero: r = z = 0.5, candidate = tanh(0) = 0, so h' = h / 2.
        let mut store = ParamStore::default();
        let cell = GruCell::new(&mut store, "g", 3, 2, &mut rng(1));
        store.fill(0.0);
        let mut t = Tape::new(&store);
        let x = t.input(rows(&[[1.0, 2.0, 3.0]]));
        let h = t.input(rows(&[[0.8, -0.4]]));
        let h2 = cell.forward(&mut t, x, h);
        assert_eq!(t.value(h2), &rows(&[[0.4, -0.2]]));
    }

    #[test]
    fn param_counts() {
        let mut store = ParamStore::default();
        let l = Linear::new(&mut store, "l", 4, 5, &mut rng(0));
        let g = GruCell::new(&mut store, "g", 5, 6, &mut rng(0));
        assert_eq!(l.param_count() + g.param_count(), store.count());
    }
}
