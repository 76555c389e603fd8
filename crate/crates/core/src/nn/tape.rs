use ndarray::{s, Array2, Axis, Zip};

use super::params::{ParamId, ParamStore};

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Cols(Var, usize),
    ScaleRows(Var, Vec<f64>),
    Sum(Vec<Var>),
    /// Scalar node whose partial derivatives were computed analytically.
    Custom(Vec<(Var, Mat)>),
}

struct Node {
    value: Mat,
    op: Op,
}

/// Records a forward computation so it can be differentiated.
///
/// Every value is a `[batch, width]` matrix.
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    nodes: Vec<Option<Mat>>,
    params: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> Option<&Mat> {
        self.nodes[v.0].as_ref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Mat> {
        self.params.get(id.0).and_then(|g| g.as_ref())
    }

    /// Per-parameter gradients, zero-filled where a parameter was unused.
    pub fn into_param_grads(self, store: &ParamStore) -> Vec<Mat> {
        let mut params = self.params;
        params.resize_with(store.len(), || None);
        params
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.unwrap_or_else(|| Mat::zeros(store.value(ParamId(i)).raw_dim())))
            .collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::with_capacity(1024),
            param_nodes: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, value: Mat) -> Var {
        self.push(value, Op::Input)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.input(Mat::zeros((rows, cols)))
    }

    /// The node for a parameter; created once per tape.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        let v = self.push(self.store.value(id).clone(), Op::Param(id));
        self.param_nodes[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, w: Var) -> Var {
        let value = self.value(a).dot(self.value(w));
        self.push(value, Op::MatMul(a, w))
    }

    /// `a + bias` with a `[1, width]` bias broadcast over rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let value = self.value(a) + self.value(bias);
        self.push(value, Op::AddRow(a, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat: row counts differ");
        self.push(value, Op::Concat(parts.to_vec()))
    }

    /// Columns `start..start + width`.
    pub fn cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let value = self.value(a).slice(s![.., start..start + width]).to_owned();
        self.push(value, Op::Cols(a, start))
    }

    /// Multiplies row `i` by the constant `scale[i]`.
    pub fn scale_rows(&mut self, a: Var, scale: Vec<f64>) -> Var {
        let mut value = self.value(a).clone();
        for (mut row, s) in value.rows_mut().into_iter().zip(&scale) {
            row *= *s;
        }
        self.push(value, Op::ScaleRows(a, scale))
    }

    /// Elementwise sum of several same-shaped nodes.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        let mut value = self.value(parts[0]).clone();
        for p in &parts[1..] {
            value += self.value(*p);
        }
        self.push(value, Op::Sum(parts.to_vec()))
    }

    /// A scalar node with analytically supplied partial derivatives.
    pub fn custom(&mut self, value: f64, partials: Vec<(Var, Mat)>) -> Var {
        for (v, g) in &partials {
            debug_assert_eq!(self.value(*v).dim(), g.dim(), "custom partial shape");
        }
        self.push(Mat::from_elem((1, 1), value), Op::Custom(partials))
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    /// Reverse pass seeded with `d root / d root = 1`.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut params: Vec<Option<Mat>> = vec![None; self.store.len()];
        grads[root.0] = Some(Mat::ones(self.value(root).raw_dim()));

        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    params[id.0] = Some(g.clone());
                }
                Op::MatMul(a, w) => {
                    let da = g.dot(&self.value(*w).t());
                    let dw = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *w, dw);
                }
                Op::AddRow(a, b) => {
                    let db = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *b, db);
                    acc(&mut grads, *a, g.clone());
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let da = &g * self.value(*b);
                    let db = &g * self.value(*a);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Sigmoid(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| *d *= y * (1.0 - y));
                    acc(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| *d *= 1.0 - y * y);
                    acc(&mut grads, *a, d);
                }
                Op::Relu(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| {
                        if y <= 0.0 {
                            *d = 0.0
                        }
                    });
                    acc(&mut grads, *a, d);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        acc(&mut grads, *p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::Cols(a, start) => {
                    let src = self.value(*a);
                    let mut d = Mat::zeros(src.raw_dim());
                    d.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut grads, *a, d);
                }
                Op::ScaleRows(a, scale) => {
                    let mut d = g.clone();
                    for (mut row, s) in d.rows_mut().into_iter().zip(scale) {
                        row *= *s;
                    }
                    acc(&mut grads, *a, d);
                }
                Op::Sum(parts) => {
                    for p in parts {
                        acc(&mut grads, *p, g.clone());
                    }
                }
                Op::Custom(partials) => {
                    let upstream = g[[0, 0]];
                    for (v, d) in partials {
                        acc(&mut grads, *v, d * upstream);
                    }
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { nodes: grads, params }
    }
}
