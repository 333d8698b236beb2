//! The graph scoring network: feature embedding, rounds of bipartite
//! attention message passing, attention pooling and a two-layer head.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{attention_pool, gat_layer, AttentionHead, EdgeList, GatParams, PoolParams};
use super::tape::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, CONS_FEATURES, FEATURE_SCHEMA_VERSION, VAR_FEATURES};
use crate::seed;

/// Version of the weights file layout.
pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub hidden: usize,
    pub heads: usize,
    pub rounds: usize,
    pub leaky_slope: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            hidden: 32,
            heads: 4,
            rounds: 2,
            leaky_slope: 0.2,
        }
    }
}

impl HyperParams {
    pub fn check(&self) -> Result<()> {
        if self.hidden == 0 || self.heads == 0 {
            return Err(Error::InvalidConfig("hidden width and head count must be positive".into()));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::InvalidConfig(format!("leaky slope {}", self.leaky_slope)));
        }
        Ok(())
    }

    /// Names and shapes of every tensor, in storage order.
    pub fn layout(&self) -> Vec<(String, (usize, usize))> {
        let h = self.hidden;
        let mut out = vec![
            ("embed_var.w".to_owned(), (VAR_FEATURES, h)),
            ("embed_var.b".to_owned(), (1, h)),
            ("embed_cons.w".to_owned(), (CONS_FEATURES, h)),
            ("embed_cons.b".to_owned(), (1, h)),
        ];
        for round in 0..self.rounds {
            for dir in ["to_cons", "to_var"] {
                let p = format!("round{round}.{dir}");
                for k in 0..self.heads {
                    out.push((format!("{p}.head{k}.w"), (h, h)));
                    out.push((format!("{p}.head{k}.a"), (2 * h + 1, 1)));
                }
                out.push((format!("{p}.proj.w"), (h * self.heads, h)));
                out.push((format!("{p}.proj.b"), (1, h)));
                out.push((format!("{p}.self.w"), (h, h)));
                out.push((format!("{p}.self.b"), (1, h)));
            }
        }
        out.extend([
            ("pool.gate.w".to_owned(), (h, 1)),
            ("pool.gate.b".to_owned(), (1, 1)),
            ("pool.transform.w".to_owned(), (h, h)),
            ("pool.transform.b".to_owned(), (1, h)),
            ("head.hidden.w".to_owned(), (h, h)),
            ("head.hidden.b".to_owned(), (1, h)),
            ("head.out.w".to_owned(), (h, 1)),
            ("head.out.b".to_owned(), (1, 1)),
        ]);
        out
    }
}

/// Parameter tensors in [`HyperParams::layout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hyper: HyperParams,
    pub tensors: Vec<Matrix>,
}

/// Gradient with respect to every tensor of a [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Matrix>);

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self(params.tensors.iter().map(|t| Matrix::zeros(t.dim())).collect())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.0 {
            *a *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

impl ModelParams {
    /// Glorot-uniform weights and zero biases from a seeded stream.
    pub fn init(hyper: HyperParams, rng_seed: u64) -> Result<Self> {
        hyper.check()?;
        let mut rng = seed::rng(rng_seed);
        let tensors = hyper
            .layout()
            .into_iter()
            .map(|(name, (r, c))| {
                if name.ends_with(".b") {
                    Matrix::zeros((r, c))
                } else {
                    let limit = (6.0 / (r + c) as f64).sqrt();
                    Matrix::from_shape_simple_fn((r, c), || rng.random_range(-limit..limit))
                }
            })
            .collect();
        Ok(Self { hyper, tensors })
    }

    pub fn zeros(hyper: HyperParams) -> Result<Self> {
        hyper.check()?;
        let tensors = hyper.layout().into_iter().map(|(_, s)| Matrix::zeros(s)).collect();
        Ok(Self { hyper, tensors })
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors.iter().map(|t| t.dim()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Model output for one graph.
    pub fn forward(&self, graph: &BipartiteGraph) -> Result<f64> {
        Ok(self.trace(graph)?.score())
    }

    /// Runs the forward pass and keeps the tape for a later backward pass.
    pub fn trace(&self, graph: &BipartiteGraph) -> Result<Trace> {
        check_graph(graph)?;
        let inputs = GraphInputs::new(graph)?;
        let mut tape = Tape::new();
        let vars: Vec<Var> = self
            .tensors
            .iter()
            .enumerate()
            .map(|(i, t)| tape.param(i, t.clone()))
            .collect();
        let mut next = vars.iter().copied();
        let mut take = || next.next().expect("layout and tensors agree");

        let xv = tape.constant(graph.var_features.clone());
        let xc = tape.constant(graph.cons_features.clone());
        let (w, b) = (take(), take());
        let mut hv = tape.linear(xv, w, b);
        let (w, b) = (take(), take());
        let mut hc = tape.linear(xc, w, b);

        let slope = self.hyper.leaky_slope;
        let layer = |take: &mut dyn FnMut() -> Var| GatParams {
            heads: (0..self.hyper.heads)
                .map(|_| AttentionHead {
                    weight: take(),
                    attention: take(),
                })
                .collect(),
            proj_w: take(),
            proj_b: take(),
            self_w: take(),
            self_b: take(),
        };
        for _ in 0..self.hyper.rounds {
            let to_cons = layer(&mut take);
            let to_var = layer(&mut take);
            hc = gat_layer(&mut tape, hv, hc, &inputs.to_cons, &to_cons, slope)?.states;
            hv = gat_layer(&mut tape, hc, hv, &inputs.to_var, &to_var, slope)?.states;
        }

        let pool = PoolParams {
            gate_w: take(),
            gate_b: take(),
            transform_w: take(),
            transform_b: take(),
        };
        let pooled = attention_pool(&mut tape, &[hv, hc], &pool)?;
        let (w, b) = (take(), take());
        let hidden = tape.linear(pooled, w, b);
        let hidden = tape.elu(hidden);
        let (w, b) = (take(), take());
        let output = tape.linear(hidden, w, b);

        Ok(Trace {
            tape,
            output,
            shapes: self.shapes(),
        })
    }

    pub fn apply(&mut self, f: impl Fn(usize, &mut Matrix)) {
        for (i, t) in self.tensors.iter_mut().enumerate() {
            f(i, t);
        }
    }

    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        let file = WeightsFile {
            format_version: WEIGHTS_FORMAT_VERSION,
            schema_version: FEATURE_SCHEMA_VERSION,
            hyperparams: self.hyper,
            tensors: self
                .hyper
                .layout()
                .into_iter()
                .zip(&self.tensors)
                .map(|((name, _), t)| NamedTensor {
                    name,
                    values: t.rows().into_iter().map(|r| r.to_vec()).collect(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &file).map_err(Error::from_json)?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        #[derive(Deserialize)]
        struct Versions {
            format_version: u32,
            schema_version: u32,
        }
        let v: Versions = serde_json::from_str(&text).map_err(Error::from_json)?;
        if v.format_version != WEIGHTS_FORMAT_VERSION {
            return Err(Error::SchemaVersion {
                what: "weights format",
                found: v.format_version,
                expected: WEIGHTS_FORMAT_VERSION,
            });
        }
        if v.schema_version != FEATURE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                what: "feature schema",
                found: v.schema_version,
                expected: FEATURE_SCHEMA_VERSION,
            });
        }
        let file: WeightsFile = serde_json::from_str(&text).map_err(Error::from_json)?;
        file.hyperparams.check()?;
        let layout = file.hyperparams.layout();
        if layout.len() != file.tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} tensors, found {}",
                layout.len(),
                file.tensors.len()
            )));
        }
        let mut tensors = Vec::with_capacity(layout.len());
        for ((name, (r, c)), t) in layout.into_iter().zip(file.tensors) {
            if t.name != name || t.values.len() != r || t.values.iter().any(|row| row.len() != c) {
                return Err(Error::ShapeMismatch(format!("tensor {} does not match {name} {r}x{c}", t.name)));
            }
            let flat: Vec<f64> = t.values.into_iter().flatten().collect();
            if flat.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("tensor {name} has non-finite values")));
            }
            tensors.push(Matrix::from_shape_vec((r, c), flat).expect("shape checked"));
        }
        Ok(Self {
            hyper: file.hyperparams,
            tensors,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    values: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    format_version: u32,
    schema_version: u32,
    hyperparams: HyperParams,
    tensors: Vec<NamedTensor>,
}

/// A recorded forward pass.
#[derive(Debug)]
pub struct Trace {
    tape: Tape,
    output: Var,
    shapes: Vec<(usize, usize)>,
}

impl Trace {
    pub fn score(&self) -> f64 {
        self.tape.scalar(self.output)
    }

    /// Gradient of `dscore * score` with respect to every parameter.
    pub fn gradient(&self, dscore: f64) -> Gradients {
        let seed = Matrix::from_elem((1, 1), dscore);
        Gradients(self.tape.backward(self.output, seed, &self.shapes))
    }
}

fn check_graph(graph: &BipartiteGraph) -> Result<()> {
    if graph.schema_version != FEATURE_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            what: "feature schema",
            found: graph.schema_version,
            expected: FEATURE_SCHEMA_VERSION,
        });
    }
    if graph.var_features.ncols() != VAR_FEATURES || graph.cons_features.ncols() != CONS_FEATURES {
        return Err(Error::ShapeMismatch(format!(
            "feature widths {}/{} (expected {VAR_FEATURES}/{CONS_FEATURES})",
            graph.var_features.ncols(),
            graph.cons_features.ncols()
        )));
    }
    Ok(())
}

struct GraphInputs {
    to_cons: EdgeList,
    to_var: EdgeList,
}

impl GraphInputs {
    fn new(graph: &BipartiteGraph) -> Result<Self> {
        let (n, m) = (graph.num_vars(), graph.num_cons());
        let vars: Arc<[usize]> = graph.edges.iter().map(|e| e.var).collect();
        let cons: Arc<[usize]> = graph.edges.iter().map(|e| e.cons).collect();
        let attr: Vec<f64> = graph.edges.iter().map(|e| e.coef).collect();
        let to_cons = EdgeList::new(vars.to_vec(), cons.to_vec(), attr.clone(), n, m)?;
        let to_var = EdgeList::new(cons.to_vec(), vars.to_vec(), attr, m, n)?;
        Ok(Self { to_cons, to_var })
    }
}
