//! Best-bound branch and bound with per-variable branching priorities.
//!
//! The solver has no cuts, presolve or primal heuristics, so its node count
//! is a clean function of the branching order. That node count is the
//! deterministic performance measure used for every training label.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{fractionality, solve_lp_with, LpOptions, LpStatus};
use crate::mip::MipInstance;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityMap {
    pub priority: Vec<i32>,
}

impl PriorityMap {
    pub fn zeros(n: usize) -> Self {
        Self { priority: vec![0; n] }
    }

    pub fn from_members(n: usize, members: &[usize]) -> Self {
        let mut priority = vec![0; n];
        for &j in members {
            priority[j] = 1;
        }
        Self { priority }
    }

    pub fn len(&self) -> usize {
        self.priority.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priority.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    NodeCount,
    WallSeconds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbConfig {
    pub integrality_tolerance: f64,
    pub node_limit: usize,
    pub wall_time_limit: Option<f64>,
    pub measure: Measure,
    pub lp: LpOptions,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            integrality_tolerance: 1e-6,
            node_limit: 100_000,
            wall_time_limit: None,
            measure: Measure::NodeCount,
            lp: LpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BnbStatus {
    Optimal,
    NodeLimit,
    TimeLimit,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchEntry {
    pub node_id: usize,
    pub var: usize,
    pub value: f64,
}

/// One processed node, as written to the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node_id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Global upper bound when the node was selected; `None` while unbounded.
    pub global_bound: Option<f64>,
    /// `None` when the node LP was infeasible.
    pub lp_objective: Option<f64>,
    pub outcome: NodeOutcome,
    /// Integer variables fractional at this node, as `(index, value)`.
    pub fractional: Vec<(usize, f64)>,
    pub branched: Option<BranchEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeOutcome {
    Infeasible,
    Pruned,
    Integral,
    Branched,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbResult {
    pub status: BnbStatus,
    pub incumbent: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub best_bound: f64,
    pub node_count: usize,
    pub measure_value: f64,
    pub branch_log: Vec<BranchEntry>,
    pub nodes: Vec<NodeRecord>,
}

impl BnbResult {
    /// Writes one JSON line per processed node.
    pub fn write_run_log<W: Write>(&self, mut writer: W) -> Result<()> {
        for node in &self.nodes {
            serde_json::to_writer(&mut writer, node).map_err(Error::from_json)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Picks the fractional integer variable that is maximal under
/// (priority, fractionality, -index). `None` when all are integral.
pub fn select_branch_var(
    x: &[f64],
    integer: &[usize],
    priorities: &PriorityMap,
    tolerance: f64,
) -> Option<usize> {
    let mut best: Option<(usize, i32, f64)> = None;
    for &j in integer {
        let frac = fractionality(x[j]);
        if frac <= tolerance {
            continue;
        }
        let prio = priorities.priority[j];
        let wins = match best {
            None => true,
            // integer is sorted, so equal keys keep the lower index
            Some((_, bp, bf)) => prio > bp || (prio == bp && frac > bf),
        };
        if wins {
            best = Some((j, prio, frac));
        }
    }
    best.map(|(j, _, _)| j)
}

struct OpenNode {
    id: usize,
    parent: Option<usize>,
    depth: usize,
    bound: f64,
    /// Bound tightenings relative to the root, applied in order.
    changes: Vec<(usize, f64, f64)>,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenNode {}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenNode {
    // max-heap: larger bound first, then smaller id
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

fn prune_gap(incumbent: f64) -> f64 {
    1e-7 * incumbent.abs().max(1.0)
}

pub fn solve_mip(instance: &MipInstance, priorities: &PriorityMap, config: &BnbConfig) -> Result<BnbResult> {
    if priorities.len() != instance.num_vars() {
        return Err(Error::ShapeMismatch(format!(
            "priority map has length {}, instance has {} variables",
            priorities.len(),
            instance.num_vars()
        )));
    }
    if config.node_limit == 0 {
        return Err(Error::InvalidConfig("node_limit must be at least 1".into()));
    }
    let violations = instance.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidInstance(violations));
    }

    let start = Instant::now();
    let tol = config.integrality_tolerance;
    let mut heap = BinaryHeap::new();
    heap.push(OpenNode {
        id: 0,
        parent: None,
        depth: 0,
        bound: f64::INFINITY,
        changes: Vec::new(),
    });
    let mut next_id = 1;
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut nodes = Vec::new();
    let mut branch_log = Vec::new();
    let mut lower = instance.lower.clone();
    let mut upper = instance.upper.clone();
    let mut status = BnbStatus::Optimal;

    while let Some(top) = heap.peek() {
        if let Some((_, inc)) = &incumbent {
            if top.bound <= inc + prune_gap(*inc) {
                break;
            }
        }
        if nodes.len() >= config.node_limit {
            status = BnbStatus::NodeLimit;
            break;
        }
        if let Some(limit) = config.wall_time_limit {
            if start.elapsed().as_secs_f64() >= limit {
                status = BnbStatus::TimeLimit;
                break;
            }
        }
        let node = heap.pop().expect("peeked");

        lower.copy_from_slice(&instance.lower);
        upper.copy_from_slice(&instance.upper);
        for &(j, lo, hi) in &node.changes {
            lower[j] = lower[j].max(lo);
            upper[j] = upper[j].min(hi);
        }
        let lp = solve_lp_with(instance, Some((&lower, &upper)), &config.lp)?;
        let mut record = NodeRecord {
            node_id: node.id,
            parent: node.parent,
            depth: node.depth,
            global_bound: node.bound.is_finite().then_some(node.bound),
            lp_objective: None,
            outcome: NodeOutcome::Infeasible,
            fractional: Vec::new(),
            branched: None,
        };
        match lp.status {
            LpStatus::Infeasible => {
                nodes.push(record);
                continue;
            }
            LpStatus::Unbounded => return Err(Error::Unbounded),
            LpStatus::Optimal => {}
        }
        record.lp_objective = Some(lp.objective);
        if let Some((_, inc)) = &incumbent {
            if lp.objective <= inc + prune_gap(*inc) {
                record.outcome = NodeOutcome::Pruned;
                nodes.push(record);
                continue;
            }
        }
        record.fractional = instance
            .integer
            .iter()
            .filter(|&&j| fractionality(lp.x[j]) > tol)
            .map(|&j| (j, lp.x[j]))
            .collect();

        match select_branch_var(&lp.x, &instance.integer, priorities, tol) {
            None => {
                let mut x = lp.x;
                for &j in &instance.integer {
                    x[j] = x[j].round();
                }
                let value = instance.objective_value(&x);
                if incumbent.as_ref().is_none_or(|(_, inc)| value > *inc) {
                    incumbent = Some((x, value));
                }
                record.outcome = NodeOutcome::Integral;
            }
            Some(var) => {
                let value = lp.x[var];
                let entry = BranchEntry {
                    node_id: node.id,
                    var,
                    value,
                };
                branch_log.push(entry.clone());
                record.branched = Some(entry);
                record.outcome = NodeOutcome::Branched;
                let bound = lp.objective.min(node.bound);
                // up branch gets the smaller id and is explored first on ties
                for (lo, hi) in [(value.ceil(), f64::INFINITY), (f64::NEG_INFINITY, value.floor())] {
                    let mut changes = node.changes.clone();
                    changes.push((var, lo, hi));
                    heap.push(OpenNode {
                        id: next_id,
                        parent: Some(node.id),
                        depth: node.depth + 1,
                        bound,
                        changes,
                    });
                    next_id += 1;
                }
            }
        }
        nodes.push(record);
    }

    let open_bound = heap.peek().map(|n| n.bound);
    let node_count = nodes.len();
    let (incumbent_x, objective) = match incumbent {
        Some((x, v)) => (Some(x), Some(v)),
        None => (None, None),
    };
    if status == BnbStatus::Optimal && objective.is_none() {
        status = BnbStatus::Infeasible;
    }
    let best_bound = match (objective, open_bound) {
        (Some(v), Some(b)) => v.max(b),
        (Some(v), None) => v,
        (None, Some(b)) => b,
        (None, None) => f64::NEG_INFINITY,
    };
    let measure_value = match config.measure {
        Measure::NodeCount => node_count as f64,
        Measure::WallSeconds => start.elapsed().as_secs_f64(),
    };
    Ok(BnbResult {
        status,
        incumbent: incumbent_x,
        objective,
        best_bound,
        node_count,
        measure_value,
        branch_log,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::{generate_gisp, GispConfig, Row, Sense};

    #[test]
    fn select_prefers_priority() {
        let p = PriorityMap { priority: vec![0, 1] };
        assert_eq!(select_branch_var(&[0.5, 0.5], &[0, 1], &p, 1e-6), Some(1));
    }

    #[test]
    fn select_prefers_fractionality_then_index() {
        let p = PriorityMap::zeros(3);
        assert_eq!(select_branch_var(&[0.5, 0.3, 0.5], &[0, 1, 2], &p, 1e-6), Some(0));
        assert_eq!(select_branch_var(&[0.2, 0.3, 0.5], &[0, 1, 2], &p, 1e-6), Some(2));
    }

    #[test]
    fn select_none_when_integral() {
        let p = PriorityMap::zeros(2);
        assert_eq!(select_branch_var(&[1.0, 2.0], &[0, 1], &p, 1e-6), None);
        assert_eq!(select_branch_var(&[1.0 + 1e-8, 2.0], &[0, 1], &p, 1e-6), None);
    }

    #[test]
    fn select_ignores_continuous() {
        let p = PriorityMap { priority: vec![5, 0] };
        assert_eq!(select_branch_var(&[0.5, 0.1], &[1], &p, 1e-6), Some(1));
    }

    #[test]
    fn two_var_knapsack() {
        let inst = MipInstance {
            id: "k".into(),
            objective: vec![1.0, 1.0],
            rows: vec![Row::new(vec![(0, 1.0), (1, 1.0)], Sense::Le, 1.5)],
            lower: vec![0.0; 2],
            upper: vec![1.0; 2],
            integer: vec![0, 1],
        };
        let res = solve_mip(&inst, &PriorityMap::zeros(2), &BnbConfig::default()).unwrap();
        assert_eq!(res.status, BnbStatus::Optimal);
        assert_eq!(res.objective, Some(1.0));
        assert!(res.node_count >= 1);
    }

    #[test]
    fn triangle_gisp() {
        let inst = generate_gisp(&GispConfig::new(3, 1.0, 100.0, 1.0, 7)).unwrap();
        let res = solve_mip(&inst, &PriorityMap::zeros(6), &BnbConfig::default()).unwrap();
        assert_eq!(res.objective, Some(297.0));
    }

    #[test]
    fn priorities_change_path_not_answer() {
        let cfg = GispConfig {
            removable_fraction: 0.5,
            ..GispConfig::new(12, 0.4, 100.0, 1.0, 5)
        };
        let inst = generate_gisp(&cfg).unwrap();
        let n = inst.num_vars();
        let base = solve_mip(&inst, &PriorityMap::zeros(n), &BnbConfig::default()).unwrap();
        for v in 0..6 {
            let res = solve_mip(&inst, &PriorityMap::from_members(n, &[v]), &BnbConfig::default()).unwrap();
            assert_eq!(res.status, BnbStatus::Optimal);
            assert!((res.objective.unwrap() - base.objective.unwrap()).abs() < 1e-6);
        }
        let again = solve_mip(&inst, &PriorityMap::zeros(n), &BnbConfig::default()).unwrap();
        assert_eq!(again.node_count, base.node_count);
        assert_eq!(again.branch_log, base.branch_log);
    }

    #[test]
    fn infeasible_mip() {
        // 2x = 1 with x integral
        let inst = MipInstance {
            id: "odd".into(),
            objective: vec![1.0],
            rows: vec![Row::new(vec![(0, 2.0)], Sense::Eq, 1.0)],
            lower: vec![0.0],
            upper: vec![3.0],
            integer: vec![0],
        };
        let res = solve_mip(&inst, &PriorityMap::zeros(1), &BnbConfig::default()).unwrap();
        assert_eq!(res.status, BnbStatus::Infeasible);
        assert_eq!(res.objective, None);
        assert_eq!(res.node_count, 3);
    }

    #[test]
    fn node_limit_reported() {
        let cfg = GispConfig {
            removable_fraction: 0.3,
            ..GispConfig::new(14, 0.5, 100.0, 1.0, 2)
        };
        let inst = generate_gisp(&cfg).unwrap();
        let config = BnbConfig {
            node_limit: 1,
            ..BnbConfig::default()
        };
        let res = solve_mip(&inst, &PriorityMap::zeros(inst.num_vars()), &config).unwrap();
        assert_eq!(res.status, BnbStatus::NodeLimit);
        assert_eq!(res.node_count, 1);
        assert!(res.best_bound.is_finite());
    }

    #[test]
    fn run_log_has_one_line_per_node() {
        let inst = generate_gisp(&GispConfig {
            removable_fraction: 0.5,
            ..GispConfig::new(8, 0.5, 100.0, 1.0, 11)
        })
        .unwrap();
        let res = solve_mip(&inst, &PriorityMap::zeros(inst.num_vars()), &BnbConfig::default()).unwrap();
        let mut buf = Vec::new();
        res.write_run_log(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), res.node_count);
        let first: NodeRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first.node_id, 0);
    }
}
