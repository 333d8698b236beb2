//! Graph attention message passing and global attention pooling, written
//! against the [`Tape`] so both layers are differentiable.

use std::sync::Arc;

use ndarray::Array2;

use super::tape::{Matrix, Tape, Var};
use crate::error::{Error, Result};

/// Directed edges from a source node set into a destination node set.
#[derive(Debug, Clone)]
pub struct EdgeList {
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    /// Edge attribute per edge, `E x 1`.
    pub attr: Matrix,
    pub num_src: usize,
    pub num_dst: usize,
}

impl EdgeList {
    pub fn new(src: Vec<usize>, dst: Vec<usize>, attr: Vec<f64>, num_src: usize, num_dst: usize) -> Result<Self> {
        if src.len() != dst.len() || src.len() != attr.len() {
            return Err(Error::ShapeMismatch("edge arrays differ in length".into()));
        }
        if src.iter().any(|&s| s >= num_src) || dst.iter().any(|&d| d >= num_dst) {
            return Err(Error::ShapeMismatch("edge endpoint out of range".into()));
        }
        let e = attr.len();
        Ok(Self {
            src: src.into(),
            dst: dst.into(),
            attr: Array2::from_shape_vec((e, 1), attr).expect("length checked"),
            num_src,
            num_dst,
        })
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    /// 1 for destinations with at least one incoming edge, else 0.
    fn coverage(&self) -> Matrix {
        let mut m = Matrix::zeros((self.num_dst, 1));
        for &d in self.dst.iter() {
            m[[d, 0]] = 1.0;
        }
        m
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionHead {
    /// `h x h`
    pub weight: Var,
    /// `(2h + 1) x 1`: source part, destination part, edge-attribute weight.
    pub attention: Var,
}

#[derive(Debug, Clone)]
pub struct GatParams {
    pub heads: Vec<AttentionHead>,
    /// `hK x h`
    pub proj_w: Var,
    pub proj_b: Var,
    /// Used for destinations without incoming edges.
    pub self_w: Var,
    pub self_b: Var,
}

#[derive(Debug, Clone)]
pub struct GatOutput {
    pub states: Var,
    /// Attention coefficients per head, `E x 1`, in edge order.
    pub attention: Vec<Var>,
}

/// One attention message-passing step from `h_src` into `h_dst`.
///
/// For destination `j` and head `k`, edge logits are
/// `LeakyReLU(a_k . [W_k h_i || W_k h_j || attr_ij])`, normalized with a
/// softmax over `j`'s incoming edges, and the head output is
/// `ELU(sum_i alpha_ij W_k h_i)`. Heads are concatenated and projected back
/// to width `h`.
pub fn gat_layer(
    tape: &mut Tape,
    h_src: Var,
    h_dst: Var,
    edges: &EdgeList,
    params: &GatParams,
    slope: f64,
) -> Result<GatOutput> {
    let (ns, width) = tape.value(h_src).dim();
    let (nd, width_dst) = tape.value(h_dst).dim();
    if ns != edges.num_src || nd != edges.num_dst || width != width_dst {
        return Err(Error::ShapeMismatch(format!(
            "gat inputs {ns}x{width} -> {nd}x{width_dst} do not match edge list {} -> {}",
            edges.num_src, edges.num_dst
        )));
    }
    for head in &params.heads {
        let w = tape.value(head.weight).dim();
        let a = tape.value(head.attention).dim();
        if w.0 != width || a != (2 * w.1 + 1, 1) {
            return Err(Error::ShapeMismatch(format!(
                "attention head shapes {w:?}/{a:?} do not fit width {width}"
            )));
        }
    }

    let self_path = |tape: &mut Tape| {
        let z = tape.linear(h_dst, params.self_w, params.self_b);
        tape.elu(z)
    };
    if edges.is_empty() {
        return Ok(GatOutput {
            states: self_path(tape),
            attention: Vec::new(),
        });
    }

    let attr = tape.constant(edges.attr.clone());
    let mut head_outputs = Vec::with_capacity(params.heads.len());
    let mut attention = Vec::with_capacity(params.heads.len());
    for head in &params.heads {
        let hidden = tape.value(head.weight).ncols();
        let ws = tape.matmul(h_src, head.weight);
        let wd = tape.matmul(h_dst, head.weight);
        let a_src = tape.slice_rows(head.attention, 0, hidden);
        let a_dst = tape.slice_rows(head.attention, hidden, hidden);
        let a_edge = tape.slice_rows(head.attention, 2 * hidden, 1);
        let score_src = tape.matmul(ws, a_src);
        let score_dst = tape.matmul(wd, a_dst);
        let es = tape.gather(score_src, edges.src.clone());
        let ed = tape.gather(score_dst, edges.dst.clone());
        let ea = tape.matmul(attr, a_edge);
        let logit = tape.add(es, ed);
        let logit = tape.add(logit, ea);
        let logit = tape.leaky_relu(logit, slope);
        let alpha = tape.segment_softmax(logit, edges.dst.clone(), edges.num_dst);
        let msg = tape.gather(ws, edges.src.clone());
        let msg = tape.scale_rows(msg, alpha);
        let agg = tape.scatter_add(msg, edges.dst.clone(), edges.num_dst);
        head_outputs.push(tape.elu(agg));
        attention.push(alpha);
    }
    let cat = tape.concat_cols(&head_outputs);
    let projected = tape.linear(cat, params.proj_w, params.proj_b);

    let coverage = edges.coverage();
    if coverage.iter().all(|&c| c == 1.0) {
        return Ok(GatOutput {
            states: projected,
            attention,
        });
    }
    let isolated = coverage.mapv(|c| 1.0 - c);
    let covered = tape.constant(coverage);
    let isolated = tape.constant(isolated);
    let own = self_path(tape);
    let a = tape.scale_rows(projected, covered);
    let b = tape.scale_rows(own, isolated);
    Ok(GatOutput {
        states: tape.add(a, b),
        attention,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct PoolParams {
    /// `h x 1`
    pub gate_w: Var,
    pub gate_b: Var,
    /// `h x h`
    pub transform_w: Var,
    pub transform_b: Var,
}

/// `sum_v sigmoid(gate(h_v)) * tanh(transform(h_v))` over every node of
/// every set in `node_sets`; returns a `1 x h` row.
pub fn attention_pool(tape: &mut Tape, node_sets: &[Var], params: &PoolParams) -> Result<Var> {
    let mut total: Option<Var> = None;
    for &states in node_sets {
        if tape.value(states).nrows() == 0 {
            continue;
        }
        let gate = tape.linear(states, params.gate_w, params.gate_b);
        let gate = tape.sigmoid(gate);
        let value = tape.linear(states, params.transform_w, params.transform_b);
        let value = tape.tanh(value);
        let gated = tape.scale_rows(value, gate);
        let pooled = tape.sum_rows(gated);
        total = Some(match total {
            Some(t) => tape.add(t, pooled),
            None => pooled,
        });
    }
    total.ok_or(Error::EmptyInput("graph has no nodes to pool"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = crate::seed::rng(seed);
        Matrix::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn layer(tape: &mut Tape, h: usize, heads: usize, seed: u64) -> GatParams {
        let mut idx = 0;
        let mut p = |t: &mut Tape, r, c| {
            idx += 1;
            t.param(idx, random(r, c, seed + idx as u64))
        };
        GatParams {
            heads: (0..heads)
                .map(|_| AttentionHead {
                    weight: p(tape, h, h),
                    attention: p(tape, 2 * h + 1, 1),
                })
                .collect(),
            proj_w: p(tape, h * heads, h),
            proj_b: p(tape, 1, h),
            self_w: p(tape, h, h),
            self_b: p(tape, 1, h),
        }
    }

    #[test]
    fn single_edge_gets_full_attention() {
        let mut t = Tape::new();
        let params = layer(&mut t, 3, 2, 1);
        let src = t.constant(random(2, 3, 10));
        let dst = t.constant(random(1, 3, 11));
        let edges = EdgeList::new(vec![1], vec![0], vec![0.7], 2, 1).unwrap();
        let out = gat_layer(&mut t, src, dst, &edges, &params, 0.2).unwrap();
        for a in out.attention {
            assert_eq!(t.value(a)[[0, 0]], 1.0);
        }
    }

    #[test]
    fn symmetric_edges_split_evenly() {
        let mut t = Tape::new();
        let params = layer(&mut t, 3, 2, 2);
        let row = random(1, 3, 12);
        let src = t.constant(ndarray::concatenate![ndarray::Axis(0), row, row]);
        let dst = t.constant(random(1, 3, 13));
        let edges = EdgeList::new(vec![0, 1], vec![0, 0], vec![0.4, 0.4], 2, 1).unwrap();
        let out = gat_layer(&mut t, src, dst, &edges, &params, 0.2).unwrap();
        for a in out.attention {
            let v = t.value(a);
            assert!((v[[0, 0]] - 0.5).abs() < 1e-15 && (v[[1, 0]] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn shifted_logits_keep_attention() {
        // a constant +10 on every incoming logit of a node leaves alpha unchanged
        let mut t = Tape::new();
        let logits = t.constant(array![[0.3], [-1.2], [2.0]]);
        let shifted = t.constant(array![[10.3], [8.8], [12.0]]);
        let seg: Arc<[usize]> = vec![0, 0, 0].into();
        let a = t.segment_softmax(logits, seg.clone(), 1);
        let b = t.segment_softmax(shifted, seg, 1);
        for (x, y) in t.value(a).iter().zip(t.value(b)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_destinations_use_self_transform() {
        let mut t = Tape::new();
        let params = layer(&mut t, 3, 1, 3);
        let src = t.constant(random(2, 3, 14));
        let dst_vals = random(2, 3, 15);
        let dst = t.constant(dst_vals.clone());
        let edges = EdgeList::new(vec![0], vec![0], vec![1.0], 2, 2).unwrap();
        let out = gat_layer(&mut t, src, dst, &edges, &params, 0.2).unwrap();
        let expected = {
            let z = dst_vals.row(1).dot(t.value(params.self_w)) + t.value(params.self_b).row(0);
            z.mapv(|x| if x > 0.0 { x } else { x.exp_m1() })
        };
        for (a, b) in t.value(out.states).row(1).iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut t = Tape::new();
        let params = layer(&mut t, 3, 1, 4);
        let src = t.constant(random(2, 4, 16));
        let dst = t.constant(random(1, 3, 17));
        let edges = EdgeList::new(vec![0], vec![0], vec![1.0], 2, 1).unwrap();
        assert!(gat_layer(&mut t, src, dst, &edges, &params, 0.2).is_err());
        assert!(EdgeList::new(vec![5], vec![0], vec![1.0], 2, 1).is_err());
    }

    fn pool_params(t: &mut Tape, h: usize, zero_gate: bool) -> PoolParams {
        let gate_w = if zero_gate { Matrix::zeros((h, 1)) } else { random(h, 1, 20) };
        PoolParams {
            gate_w: t.param(0, gate_w),
            gate_b: t.param(1, Matrix::zeros((1, 1))),
            transform_w: t.param(2, random(h, h, 21)),
            transform_b: t.param(3, Matrix::zeros((1, h))),
        }
    }

    #[test]
    fn pool_with_zero_gate_halves_transform() {
        let mut t = Tape::new();
        let p = pool_params(&mut t, 4, true);
        let hv = random(1, 4, 22);
        let states = t.constant(hv.clone());
        let out = attention_pool(&mut t, &[states], &p).unwrap();
        let expected = hv.dot(t.value(p.transform_w)).mapv(|x| 0.5 * x.tanh());
        for (a, b) in t.value(out).iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn pool_is_permutation_invariant() {
        let mut t = Tape::new();
        let p = pool_params(&mut t, 4, false);
        let hv = random(5, 4, 23);
        let mut reversed = hv.clone();
        reversed.invert_axis(ndarray::Axis(0));
        let a = t.constant(hv);
        let b = t.constant(reversed);
        let pa = attention_pool(&mut t, &[a], &p).unwrap();
        let pb = attention_pool(&mut t, &[b], &p).unwrap();
        for (x, y) in t.value(pa).iter().zip(t.value(pb)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_of_zero_states_is_zero() {
        let mut t = Tape::new();
        let p = pool_params(&mut t, 4, false);
        let z = t.constant(Matrix::zeros((3, 4)));
        let out = attention_pool(&mut t, &[z], &p).unwrap();
        assert!(t.value(out).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pool_rejects_empty() {
        let mut t = Tape::new();
        let p = pool_params(&mut t, 4, false);
        let z = t.constant(Matrix::zeros((0, 4)));
        assert!(attention_pool(&mut t, &[z], &p).is_err());
    }
}
