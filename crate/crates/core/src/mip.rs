//! MIP data model, validation, instance files and the GISP generator.
//!
//! Instances are always stored in maximization form:
//! `max c^T x  s.t.  rows, lower <= x <= upper, x_i integral for i in integer`.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const INSTANCE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn new(coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> Self {
        Self { coeffs, sense, rhs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipInstance {
    pub id: String,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Sorted indices of the integral variables.
    pub integer: Vec<usize>,
}

impl MipInstance {
    /// Builds an instance from a minimization objective by negating it.
    pub fn from_minimization(
        id: impl Into<String>,
        min_objective: &[f64],
        rows: Vec<Row>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        integer: Vec<usize>,
    ) -> Self {
        Self {
            id: id.into(),
            objective: min_objective.iter().map(|c| -c).collect(),
            rows,
            lower,
            upper,
            integer,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.coeffs.len()).sum()
    }

    pub fn is_integer(&self, var: usize) -> bool {
        self.integer.binary_search(&var).is_ok()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Maximum violation of rows and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let v = match row.sense {
                Sense::Le => lhs - row.rhs,
                Sense::Ge => row.rhs - lhs,
                Sense::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    BoundsLength { lower: usize, upper: usize, n: usize },
    InvertedBounds { var: usize },
    NonFinite { what: &'static str, index: usize },
    RowVarOutOfRange { row: usize, var: usize },
    DuplicateEntry { row: usize, var: usize },
    IntegerOutOfRange { var: usize },
    IntegerNotSorted { position: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BoundsLength { lower, upper, n } => {
                write!(f, "bound vectors have lengths {lower}/{upper}, expected {n}")
            }
            Violation::InvertedBounds { var } => write!(f, "variable {var} has lower > upper"),
            Violation::NonFinite { what, index } => write!(f, "{what} {index} is not finite"),
            Violation::RowVarOutOfRange { row, var } => {
                write!(f, "row {row} references variable {var} out of range")
            }
            Violation::DuplicateEntry { row, var } => {
                write!(f, "row {row} has duplicate entries for variable {var}")
            }
            Violation::IntegerOutOfRange { var } => {
                write!(f, "integer set references variable {var} out of range")
            }
            Violation::IntegerNotSorted { position } => {
                write!(f, "integer set not strictly increasing at position {position}")
            }
        }
    }
}

pub fn validate(instance: &MipInstance) -> Vec<Violation> {
    let n = instance.num_vars();
    let mut out = Vec::new();
    if instance.lower.len() != n || instance.upper.len() != n {
        out.push(Violation::BoundsLength {
            lower: instance.lower.len(),
            upper: instance.upper.len(),
            n,
        });
    } else {
        for j in 0..n {
            if instance.lower[j] > instance.upper[j]
                || instance.lower[j] == f64::INFINITY
                || instance.upper[j] == f64::NEG_INFINITY
            {
                out.push(Violation::InvertedBounds { var: j });
            }
        }
    }
    for (j, c) in instance.objective.iter().enumerate() {
        if !c.is_finite() {
            out.push(Violation::NonFinite {
                what: "objective coefficient",
                index: j,
            });
        }
    }
    for (i, row) in instance.rows.iter().enumerate() {
        if !row.rhs.is_finite() {
            out.push(Violation::NonFinite { what: "rhs of row", index: i });
        }
        let mut seen = HashSet::with_capacity(row.coeffs.len());
        for &(var, a) in &row.coeffs {
            if var >= n {
                out.push(Violation::RowVarOutOfRange { row: i, var });
            } else if !seen.insert(var) {
                out.push(Violation::DuplicateEntry { row: i, var });
            }
            if !a.is_finite() {
                out.push(Violation::NonFinite { what: "coefficient in row", index: i });
            }
        }
    }
    for (pos, &var) in instance.integer.iter().enumerate() {
        if var >= n {
            out.push(Violation::IntegerOutOfRange { var });
        }
        if pos > 0 && instance.integer[pos - 1] >= var {
            out.push(Violation::IntegerNotSorted { position: pos });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Instance files

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    version: u32,
    id: String,
    n: usize,
    c: Vec<f64>,
    /// `null` encodes an infinite bound.
    bounds: Vec<(Option<f64>, Option<f64>)>,
    integer: Vec<usize>,
    rows: Vec<Row>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn write_instance<W: Write>(instance: &MipInstance, mut writer: W) -> Result<()> {
    let file = InstanceFile {
        version: INSTANCE_FORMAT_VERSION,
        id: instance.id.clone(),
        n: instance.num_vars(),
        c: instance.objective.clone(),
        bounds: instance
            .lower
            .iter()
            .zip(&instance.upper)
            .map(|(&lo, &hi)| (finite_or_none(lo), finite_or_none(hi)))
            .collect(),
        integer: instance.integer.clone(),
        rows: instance.rows.clone(),
    };
    serde_json::to_writer(&mut writer, &file).map_err(Error::from_json)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn instance_to_bytes(instance: &MipInstance) -> Vec<u8> {
    let mut buf = Vec::new();
    write_instance(instance, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub fn read_instance<R: Read>(mut reader: R) -> Result<MipInstance> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    instance_from_str(&text)
}

pub fn instance_from_str(text: &str) -> Result<MipInstance> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(Error::from_json)?;
    if probe.version != INSTANCE_FORMAT_VERSION {
        return Err(Error::SchemaVersion {
            what: "instance",
            found: probe.version,
            expected: INSTANCE_FORMAT_VERSION,
        });
    }
    let file: InstanceFile = serde_json::from_str(text).map_err(Error::from_json)?;
    if file.c.len() != file.n || file.bounds.len() != file.n {
        return Err(Error::InvalidInstance(vec![Violation::BoundsLength {
            lower: file.bounds.len(),
            upper: file.c.len(),
            n: file.n,
        }]));
    }
    let instance = MipInstance {
        id: file.id,
        objective: file.c,
        lower: file
            .bounds
            .iter()
            .map(|b| b.0.unwrap_or(f64::NEG_INFINITY))
            .collect(),
        upper: file.bounds.iter().map(|b| b.1.unwrap_or(f64::INFINITY)).collect(),
        integer: file.integer,
        rows: file.rows,
    };
    let violations = instance.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidInstance(violations));
    }
    Ok(instance)
}

// ---------------------------------------------------------------------------
// Generalized independent set problem

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GispConfig {
    pub num_vertices: usize,
    pub edge_probability: f64,
    pub vertex_revenue: f64,
    pub edge_cost: f64,
    /// Probability that an edge is removable (gets a `y_e` variable); the
    /// remaining edges are hard conflicts `x_u + x_v <= 1`.
    pub removable_fraction: f64,
    pub seed: u64,
}

impl GispConfig {
    /// Every edge removable.
    pub fn new(num_vertices: usize, edge_probability: f64, revenue: f64, cost: f64, seed: u64) -> Self {
        Self {
            num_vertices,
            edge_probability,
            vertex_revenue: revenue,
            edge_cost: cost,
            removable_fraction: 1.0,
            seed,
        }
    }

    pub fn check(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.edge_probability) {
            return Err(Error::InvalidConfig(format!(
                "edge_probability {} outside [0, 1]",
                self.edge_probability
            )));
        }
        if !prob(self.removable_fraction) {
            return Err(Error::InvalidConfig(format!(
                "removable_fraction {} outside [0, 1]",
                self.removable_fraction
            )));
        }
        if !(self.vertex_revenue > 0.0 && self.edge_cost > 0.0) {
            return Err(Error::InvalidConfig(
                "vertex_revenue and edge_cost must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Draws an Erdős–Rényi graph and builds the GISP model over it.
///
/// Variables are `x_v` for every vertex followed by `y_e` for every removable
/// edge in edge order. Each edge contributes one row with rhs 1.
pub fn generate_gisp(config: &GispConfig) -> Result<MipInstance> {
    config.check()?;
    let mut rng = seed::rng(config.seed);
    let nv = config.num_vertices;
    let mut edges = Vec::new();
    for u in 0..nv {
        for v in (u + 1)..nv {
            if rng.random::<f64>() < config.edge_probability {
                let removable = rng.random::<f64>() < config.removable_fraction;
                edges.push((u, v, removable));
            }
        }
    }

    let mut objective = vec![config.vertex_revenue; nv];
    let mut rows = Vec::with_capacity(edges.len());
    for &(u, v, removable) in &edges {
        let mut coeffs = vec![(u, 1.0), (v, 1.0)];
        if removable {
            coeffs.push((objective.len(), -1.0));
            objective.push(-config.edge_cost);
        }
        rows.push(Row::new(coeffs, Sense::Le, 1.0));
    }
    let n = objective.len();
    Ok(MipInstance {
        id: format!("gisp-v{}-s{}", nv, config.seed),
        objective,
        rows,
        lower: vec![0.0; n],
        upper: vec![1.0; n],
        integer: (0..n).collect(),
    })
}
