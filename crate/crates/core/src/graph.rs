//! Bipartite variable/constraint encoding of an instance plus a candidate.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::backdoor::CandidateSet;
use crate::error::{Error, Result};
use crate::lp::{fractionality, BasisStatus, LpSolution, LpStatus};
use crate::mip::{MipInstance, Sense};

pub const FEATURE_SCHEMA_VERSION: u32 = 1;
pub const VAR_FEATURES: usize = 7;
pub const CONS_FEATURES: usize = 5;

/// Column of the candidate-membership flag in `var_features`.
pub const BACKDOOR_COLUMN: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub var: usize,
    pub cons: usize,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    /// Columns: objective, LP value, fractionality, basic, at-lower,
    /// at-upper, candidate flag.
    pub var_features: Array2<f64>,
    /// Columns: rhs, dual, `<=`, `>=`, `=`.
    pub cons_features: Array2<f64>,
    pub edges: Vec<Edge>,
    pub schema_version: u32,
}

impl BipartiteGraph {
    pub fn num_vars(&self) -> usize {
        self.var_features.nrows()
    }

    pub fn num_cons(&self) -> usize {
        self.cons_features.nrows()
    }

    /// Returns a copy with the candidate flag column replaced.
    pub fn with_candidate(&self, members: &[usize]) -> Self {
        let mut g = self.clone();
        g.var_features.column_mut(BACKDOOR_COLUMN).fill(0.0);
        for &j in members {
            g.var_features[[j, BACKDOOR_COLUMN]] = 1.0;
        }
        g
    }
}

fn max_abs(values: impl Iterator<Item = f64>) -> f64 {
    let m = values.fold(0.0f64, |acc, v| acc.max(v.abs()));
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

pub fn encode(instance: &MipInstance, root_lp: &LpSolution, candidate: &CandidateSet) -> Result<BipartiteGraph> {
    if candidate.instance_id != instance.id {
        return Err(Error::InstanceMismatch {
            expected: instance.id.clone(),
            found: candidate.instance_id.clone(),
        });
    }
    if root_lp.status != LpStatus::Optimal {
        return Err(Error::RootNotOptimal(format!("{:?}", root_lp.status)));
    }
    let n = instance.num_vars();
    let m = instance.num_rows();
    if root_lp.x.len() != n || root_lp.duals.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "root LP has {} values and {} duals for an instance with {n} vars and {m} rows",
            root_lp.x.len(),
            root_lp.duals.len()
        )));
    }
    if let Some(&bad) = candidate.vars.iter().find(|&&j| j >= n) {
        return Err(Error::ShapeMismatch(format!("candidate variable {bad} out of range")));
    }

    let obj_scale = max_abs(instance.objective.iter().copied());
    let x_scale = max_abs(root_lp.x.iter().copied());
    let mut var_features = Array2::zeros((n, VAR_FEATURES));
    for j in 0..n {
        let x = root_lp.x[j];
        var_features[[j, 0]] = instance.objective[j] / obj_scale;
        var_features[[j, 1]] = x / x_scale;
        var_features[[j, 2]] = fractionality(x);
        let basis_col = match root_lp.basis[j] {
            BasisStatus::Basic => 3,
            BasisStatus::NonbasicAtLower => 4,
            BasisStatus::NonbasicAtUpper => 5,
        };
        var_features[[j, basis_col]] = 1.0;
    }
    for &j in &candidate.vars {
        var_features[[j, BACKDOOR_COLUMN]] = 1.0;
    }

    let rhs_scale = max_abs(instance.rows.iter().map(|r| r.rhs));
    let dual_scale = max_abs(root_lp.duals.iter().copied());
    let coef_scale = max_abs(instance.rows.iter().flat_map(|r| r.coeffs.iter().map(|c| c.1)));
    let mut cons_features = Array2::zeros((m, CONS_FEATURES));
    let mut edges = Vec::with_capacity(instance.num_nonzeros());
    for (i, row) in instance.rows.iter().enumerate() {
        cons_features[[i, 0]] = row.rhs / rhs_scale;
        cons_features[[i, 1]] = root_lp.duals[i] / dual_scale;
        let sense_col = match row.sense {
            Sense::Le => 2,
            Sense::Ge => 3,
            Sense::Eq => 4,
        };
        cons_features[[i, sense_col]] = 1.0;
        for &(var, a) in &row.coeffs {
            edges.push(Edge {
                var,
                cons: i,
                coef: a / coef_scale,
            });
        }
    }

    Ok(BipartiteGraph {
        var_features,
        cons_features,
        edges,
        schema_version: FEATURE_SCHEMA_VERSION,
    })
}
