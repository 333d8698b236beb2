//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every operation appends a node holding its value and the recipe for
//! pushing a gradient back to its inputs. Nodes are stored in creation
//! order, so a single reverse sweep is a valid topological traversal.

use std::sync::Arc;

use ndarray::{s, Array2, Axis};

pub type Matrix = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    /// `a + bias` with a `1 x c` bias broadcast over rows.
    AddBias(Var, Var),
    Add(Var, Var),
    /// Row `i` of `a` multiplied by `w[i, 0]`.
    ScaleRows(Var, Var),
    LeakyRelu(Var, f64),
    Elu(Var),
    Sigmoid(Var),
    Tanh(Var),
    SliceRows(Var, usize),
    Gather(Var, Arc<[usize]>),
    ScatterAdd(Var, Arc<[usize]>),
    ConcatCols(Vec<Var>),
    /// Softmax of a column vector within groups given by a segment id per row.
    SegmentSoftmax(Var, Arc<[usize]>),
    SumRows(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    /// Whether any parameter feeds into this node.
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.dim(), (1, 1));
        m[[0, 0]]
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        let t = |v: &Var| self.nodes[v.0].tracked;
        let tracked = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            Op::MatMul(a, b) | Op::AddBias(a, b) | Op::Add(a, b) | Op::ScaleRows(a, b) => t(a) || t(b),
            Op::LeakyRelu(a, _)
            | Op::Elu(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::SliceRows(a, _)
            | Op::Gather(a, _)
            | Op::ScatterAdd(a, _)
            | Op::SegmentSoftmax(a, _)
            | Op::SumRows(a) => t(a),
            Op::ConcatCols(parts) => parts.iter().any(t),
        };
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A trainable input; its gradient is reported under `index`.
    pub fn param(&mut self, index: usize, value: Matrix) -> Var {
        self.push(value, Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let v = self.value(a) + self.value(bias);
        self.push(v, Op::AddBias(a, bias))
    }

    /// `x W + b`
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_bias(xw, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn scale_rows(&mut self, a: Var, w: Var) -> Var {
        let v = self.value(a) * self.value(w);
        self.push(v, Op::ScaleRows(a, w))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).mapv(|x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push(v, Op::Elu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start))
    }

    pub fn gather(&mut self, a: Var, index: Arc<[usize]>) -> Var {
        let src = self.value(a);
        let mut v = Matrix::zeros((index.len(), src.ncols()));
        for (e, &i) in index.iter().enumerate() {
            v.row_mut(e).assign(&src.row(i));
        }
        self.push(v, Op::Gather(a, index))
    }

    pub fn scatter_add(&mut self, a: Var, index: Arc<[usize]>, rows: usize) -> Var {
        let src = self.value(a);
        let mut v = Matrix::zeros((rows, src.ncols()));
        for (e, &i) in index.iter().enumerate() {
            let mut row = v.row_mut(i);
            row += &src.row(e);
        }
        self.push(v, Op::ScatterAdd(a, index))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn segment_softmax(&mut self, a: Var, segment: Arc<[usize]>, segments: usize) -> Var {
        let x = self.value(a);
        debug_assert_eq!(x.ncols(), 1);
        let mut max = vec![f64::NEG_INFINITY; segments];
        for (e, &s) in segment.iter().enumerate() {
            max[s] = max[s].max(x[[e, 0]]);
        }
        let mut v = Matrix::zeros((segment.len(), 1));
        let mut sum = vec![0.0; segments];
        for (e, &s) in segment.iter().enumerate() {
            let ex = (x[[e, 0]] - max[s]).exp();
            v[[e, 0]] = ex;
            sum[s] += ex;
        }
        for (e, &s) in segment.iter().enumerate() {
            v[[e, 0]] /= sum[s];
        }
        self.push(v, Op::SegmentSoftmax(a, segment))
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(v, Op::SumRows(a))
    }

    /// Back-propagates `seed` from `output` and returns one gradient per entry
    /// of `param_shapes` (zeros where a parameter was unused).
    pub fn backward(&self, output: Var, seed: Matrix, param_shapes: &[(usize, usize)]) -> Vec<Matrix> {
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);
        let mut params: Vec<Matrix> = param_shapes.iter().map(|&s| Matrix::zeros(s)).collect();

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => params[*p] += &g,
                Op::MatMul(a, b) => {
                    if self.tracked(*b) {
                        let gb = self.value(*a).t().dot(&g);
                        accumulate(&mut grads, *b, gb);
                    }
                    if self.tracked(*a) {
                        let ga = g.dot(&self.value(*b).t());
                        accumulate(&mut grads, *a, ga);
                    }
                }
                Op::AddBias(a, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::ScaleRows(a, w) => {
                    let av = self.value(*a);
                    let wv = self.value(*w);
                    if self.tracked(*w) {
                        let gw = (&g * av).sum_axis(Axis(1)).insert_axis(Axis(1));
                        accumulate(&mut grads, *w, gw);
                    }
                    if self.tracked(*a) {
                        accumulate(&mut grads, *a, &g * wv);
                    }
                }
                Op::LeakyRelu(a, slope) => {
                    let mut ga = g;
                    ga.zip_mut_with(self.value(*a), |gi, &x| {
                        if x <= 0.0 {
                            *gi *= slope
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Elu(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(self.value(*a), |gi, &x| {
                        if x <= 0.0 {
                            *gi *= x.exp()
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(&node.value, |gi, &y| *gi *= y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(&node.value, |gi, &y| *gi *= 1.0 - y * y);
                    accumulate(&mut grads, *a, ga);
                }
                Op::SliceRows(a, start) => {
                    let mut ga = Matrix::zeros(self.value(*a).dim());
                    ga.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Gather(a, index) => {
                    let mut ga = Matrix::zeros(self.value(*a).dim());
                    for (e, &i) in index.iter().enumerate() {
                        let mut row = ga.row_mut(i);
                        row += &g.row(e);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ScatterAdd(a, index) => {
                    let mut ga = Matrix::zeros(self.value(*a).dim());
                    for (e, &i) in index.iter().enumerate() {
                        ga.row_mut(e).assign(&g.row(i));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut col = 0;
                    for &p in parts {
                        let width = self.value(p).ncols();
                        accumulate(&mut grads, p, g.slice(s![.., col..col + width]).to_owned());
                        col += width;
                    }
                }
                Op::SegmentSoftmax(a, segment) => {
                    let y = &node.value;
                    let segments = segment.iter().copied().max().map_or(0, |m| m + 1);
                    let mut dot = vec![0.0; segments];
                    for (e, &s) in segment.iter().enumerate() {
                        dot[s] += y[[e, 0]] * g[[e, 0]];
                    }
                    let mut ga = Matrix::zeros(y.dim());
                    for (e, &s) in segment.iter().enumerate() {
                        ga[[e, 0]] = y[[e, 0]] * (g[[e, 0]] - dot[s]);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumRows(a) => {
                    let rows = self.value(*a).nrows();
                    let ga = g.broadcast((rows, g.ncols())).expect("1 x c broadcast").to_owned();
                    accumulate(&mut grads, *a, ga);
                }
            }
        }
        params
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    // untracked inputs are skipped when popped
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central differences of `f` with respect to every entry of `x`.
    fn numeric(x: &Matrix, f: impl Fn(&Matrix) -> f64) -> Matrix {
        let h = 1e-6;
        let mut out = Matrix::zeros(x.dim());
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut p = x.clone();
            p[[r, c]] += h;
            let mut m = x.clone();
            m[[r, c]] -= h;
            out[[r, c]] = (f(&p) - f(&m)) / (2.0 * h);
        }
        out
    }

    fn close(a: &Matrix, b: &Matrix) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-6 * (1.0 + y.abs()), "{a} vs {b}");
        }
    }

    fn chain(w: &Matrix, a: &Matrix) -> (Tape, Var) {
        let mut t = Tape::new();
        let x = t.constant(array![[1.0, -2.0, 0.5], [0.3, 0.1, -1.0], [2.0, 0.0, 1.0]]);
        let wv = t.param(0, w.clone());
        let av = t.param(1, a.clone());
        let h = t.matmul(x, wv);
        let h = t.elu(h);
        let g = t.gather(h, vec![0, 2, 2, 1].into());
        let logit = t.matmul(g, av);
        let logit = t.leaky_relu(logit, 0.2);
        let alpha = t.segment_softmax(logit, vec![0, 1, 1, 1].into(), 2);
        let scaled = t.scale_rows(g, alpha);
        let agg = t.scatter_add(scaled, vec![0, 1, 1, 0].into(), 2);
        let th = t.tanh(agg);
        let sg = t.sigmoid(th);
        let cat = t.concat_cols(&[sg, th]);
        let top = t.slice_rows(cat, 1, 1);
        let total = t.sum_rows(cat);
        let both = t.add(total, top);
        let ones = t.constant(Matrix::ones((4, 1)));
        let out = t.matmul(both, ones);
        (t, out)
    }

    #[test]
    fn chain_of_ops_matches_differences() {
        let w0 = array![[0.3, -0.7], [1.1, 0.4], [-0.2, 0.9]];
        let a0 = array![[0.8], [-0.5]];
        let (tape, out) = chain(&w0, &a0);
        let grads = tape.backward(out, Matrix::ones((1, 1)), &[(3, 2), (2, 1)]);
        close(&grads[0], &numeric(&w0, |w| {
            let (t, o) = chain(w, &a0);
            t.scalar(o)
        }));
        close(&grads[1], &numeric(&a0, |a| {
            let (t, o) = chain(&w0, a);
            t.scalar(o)
        }));
    }

    #[test]
    fn add_bias_and_linear() {
        let b0 = array![[0.5, -1.0]];
        let build = |b: &Matrix| {
            let mut t = Tape::new();
            let x = t.constant(array![[1.0, 2.0], [3.0, 4.0], [-1.0, 0.0]]);
            let w = t.constant(array![[0.1, 0.2], [0.3, -0.4]]);
            let bv = t.param(0, b.clone());
            let y = t.linear(x, w, bv);
            let y = t.tanh(y);
            let s = t.sum_rows(y);
            let ones = t.constant(Matrix::ones((2, 1)));
            let out = t.matmul(s, ones);
            (t, out)
        };
        let (tape, out) = build(&b0);
        let g = tape.backward(out, Matrix::ones((1, 1)), &[(1, 2)]);
        close(&g[0], &numeric(&b0, |b| {
            let (t, o) = build(b);
            t.scalar(o)
        }));
    }

    #[test]
    fn segment_softmax_groups() {
        let mut t = Tape::new();
        let x = t.constant(array![[1.0], [1.0], [5.0], [15.0]]);
        let y = t.segment_softmax(x, vec![0, 0, 1, 2].into(), 3);
        let v = t.value(y);
        assert!((v[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((v[[1, 0]] - 0.5).abs() < 1e-15);
        assert_eq!(v[[2, 0]], 1.0);
        assert_eq!(v[[3, 0]], 1.0);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
