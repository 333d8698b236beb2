//! Bounded-variable primal simplex for LP relaxations.
//!
//! Each row `a_i x (sense) b_i` becomes `a_i x + s_i = b_i` with the slack
//! bounds encoding the sense (`<=`: `s >= 0`, `>=`: `s <= 0`, `=`: `s = 0`).
//! Variables keep their own bounds; nonbasic variables sit at a bound and
//! the ratio test accounts for bound flips. Rows whose slack cannot absorb
//! the initial residual get an artificial column driven out in phase one.
//!
//! The basis inverse is held densely and refactorized periodically, which is
//! plenty for the instance sizes this crate targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mip::{MipInstance, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisStatus {
    Basic,
    /// Also used for free nonbasic variables resting at zero.
    NonbasicAtLower,
    NonbasicAtUpper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Row duals. Nonnegative on `<=` rows and nonpositive on `>=` rows.
    pub duals: Vec<f64>,
    pub basis: Vec<BasisStatus>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOptions {
    pub max_iterations: usize,
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub refactor_interval: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            feasibility_tol: 1e-7,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            refactor_interval: 64,
        }
    }
}

/// Distance from `value` to the nearest integer.
pub fn fractionality(value: f64) -> f64 {
    let lo = value - value.floor();
    let hi = value.ceil() - value;
    lo.min(hi)
}

pub fn solve_lp(instance: &MipInstance, bounds: Option<(&[f64], &[f64])>) -> Result<LpSolution> {
    solve_lp_with(instance, bounds, &LpOptions::default())
}

pub fn solve_lp_with(
    instance: &MipInstance,
    bounds: Option<(&[f64], &[f64])>,
    options: &LpOptions,
) -> Result<LpSolution> {
    let (lower, upper) = bounds.unwrap_or((&instance.lower, &instance.upper));
    if lower.len() != instance.num_vars() || upper.len() != instance.num_vars() {
        return Err(Error::ShapeMismatch(format!(
            "bound overrides have lengths {}/{}, instance has {} variables",
            lower.len(),
            upper.len(),
            instance.num_vars()
        )));
    }
    let mut simplex = Simplex::new(instance, lower, upper, options);
    simplex.solve()
}

/// `c_j - pi^T A_j` for every structural variable.
pub fn reduced_costs(instance: &MipInstance, duals: &[f64]) -> Vec<f64> {
    let mut d = instance.objective.clone();
    for (i, row) in instance.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            d[j] -= duals[i] * a;
        }
    }
    d
}

/// Objective of the LP dual built from row duals and reduced costs.
///
/// For maximization the bound terms are `d_j * upper_j` for positive reduced
/// costs and `d_j * lower_j` for negative ones. Returns `+inf` when a
/// reduced cost points at an infinite bound.
pub fn dual_objective(
    instance: &MipInstance,
    bounds: Option<(&[f64], &[f64])>,
    duals: &[f64],
) -> f64 {
    let (lower, upper) = bounds.unwrap_or((&instance.lower, &instance.upper));
    let mut total: f64 = instance.rows.iter().zip(duals).map(|(r, p)| r.rhs * p).sum();
    for (j, d) in reduced_costs(instance, duals).into_iter().enumerate() {
        if d > 0.0 {
            total += if upper[j].is_finite() { d * upper[j] } else if d > 1e-9 { f64::INFINITY } else { 0.0 };
        } else if d < 0.0 {
            total += if lower[j].is_finite() { d * lower[j] } else if d < -1e-9 { f64::INFINITY } else { 0.0 };
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    Lower,
    Upper,
    Free,
}

enum Phase {
    One,
    Two,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Simplex<'a> {
    instance: &'a MipInstance,
    options: &'a LpOptions,
    m: usize,
    n: usize,
    /// Structural columns in compressed form.
    cols: Vec<Vec<(usize, f64)>>,
    /// Sign of each row's artificial column; 0 when the row needs none.
    art_sign: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    head: Vec<usize>,
    binv: Vec<f64>,
    rhs: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
}

impl<'a> Simplex<'a> {
    fn new(instance: &'a MipInstance, lower: &[f64], upper: &[f64], options: &'a LpOptions) -> Self {
        let n = instance.num_vars();
        let m = instance.num_rows();
        let total = n + 2 * m;
        let mut cols = vec![Vec::new(); n];
        for (i, row) in instance.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                cols[j].push((i, a));
            }
        }
        let mut lb = vec![0.0; total];
        let mut ub = vec![0.0; total];
        lb[..n].copy_from_slice(lower);
        ub[..n].copy_from_slice(upper);
        for (i, row) in instance.rows.iter().enumerate() {
            let (lo, hi) = match row.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lb[n + i] = lo;
            ub[n + i] = hi;
        }
        Self {
            instance,
            options,
            m,
            n,
            cols,
            art_sign: vec![0.0; m],
            lb,
            ub,
            cost: vec![0.0; total],
            x: vec![0.0; total],
            state: vec![VarState::Lower; total],
            head: vec![0; m],
            binv: vec![0.0; m * m],
            rhs: instance.rows.iter().map(|r| r.rhs).collect(),
            iterations: 0,
            since_refactor: 0,
        }
    }

    fn for_column(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for &(i, a) in &self.cols[j] {
                f(i, a);
            }
        } else if j < self.n + self.m {
            f(j - self.n, 1.0);
        } else {
            let i = j - self.n - self.m;
            f(i, self.art_sign[i]);
        }
    }

    fn solve(&mut self) -> Result<LpSolution> {
        let (n, m) = (self.n, self.m);
        if (0..n).any(|j| self.lb[j] > self.ub[j]) {
            return Ok(self.finish(LpStatus::Infeasible));
        }

        for j in 0..n + m {
            let (lo, hi) = (self.lb[j], self.ub[j]);
            let (value, state) = if lo.is_finite() {
                (lo, VarState::Lower)
            } else if hi.is_finite() {
                (hi, VarState::Upper)
            } else {
                (0.0, VarState::Free)
            };
            self.x[j] = value;
            self.state[j] = state;
        }
        let mut residual = self.rhs.clone();
        for j in 0..n {
            let xj = self.x[j];
            if xj != 0.0 {
                for &(i, a) in &self.cols[j] {
                    residual[i] -= a * xj;
                }
            }
        }

        let tol = self.options.feasibility_tol;
        let mut any_artificial = false;
        for (i, &r) in residual.iter().enumerate() {
            let slack = n + i;
            let art = n + m + i;
            if r >= self.lb[slack] - tol && r <= self.ub[slack] + tol {
                self.head[i] = slack;
                self.state[slack] = VarState::Basic(i);
                self.x[slack] = r;
                self.binv[i * m + i] = 1.0;
                self.lb[art] = 0.0;
                self.ub[art] = 0.0;
                self.x[art] = 0.0;
            } else {
                let sign = if r >= 0.0 { 1.0 } else { -1.0 };
                self.art_sign[i] = sign;
                self.head[i] = art;
                self.state[art] = VarState::Basic(i);
                self.x[art] = r.abs();
                self.lb[art] = 0.0;
                self.ub[art] = f64::INFINITY;
                self.binv[i * m + i] = sign;
                any_artificial = true;
            }
        }

        if any_artificial {
            for i in 0..m {
                self.cost[n + m + i] = if self.art_sign[i] != 0.0 { -1.0 } else { 0.0 };
            }
            self.run(Phase::One)?;
            let infeasibility: f64 = (0..m).map(|i| self.x[n + m + i].max(0.0)).sum();
            if infeasibility > tol {
                return Ok(self.finish(LpStatus::Infeasible));
            }
            for i in 0..m {
                let art = n + m + i;
                self.cost[art] = 0.0;
                self.ub[art] = 0.0;
                if !matches!(self.state[art], VarState::Basic(_)) {
                    self.x[art] = 0.0;
                }
            }
        }

        self.cost[..n].copy_from_slice(&self.instance.objective);
        match self.run(Phase::Two)? {
            PhaseEnd::Optimal => {
                self.refactor();
                Ok(self.finish(LpStatus::Optimal))
            }
            PhaseEnd::Unbounded => Ok(self.finish(LpStatus::Unbounded)),
        }
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut pi = vec![0.0; m];
        for (r, &j) in self.head.iter().enumerate() {
            let c = self.cost[j];
            if c != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (p, b) in pi.iter_mut().zip(row) {
                    *p += c * b;
                }
            }
        }
        pi
    }

    fn reduced_cost(&self, pi: &[f64], j: usize) -> f64 {
        let mut d = self.cost[j];
        self.for_column(j, |i, a| d -= pi[i] * a);
        d
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        self.for_column(j, |k, a| {
            for (i, out) in alpha.iter_mut().enumerate() {
                *out += self.binv[i * m + k] * a;
            }
        });
        alpha
    }

    fn run(&mut self, phase: Phase) -> Result<PhaseEnd> {
        let (n, m) = (self.n, self.m);
        let opt_tol = self.options.optimality_tol;
        let piv_tol = self.options.pivot_tol;
        let degenerate_limit = 10 * (n + m);
        let mut degenerate_run = 0usize;
        let mut bland = false;

        loop {
            if self.iterations >= self.options.max_iterations {
                return Err(Error::IterationLimit(self.options.max_iterations));
            }
            if self.since_refactor >= self.options.refactor_interval {
                self.refactor();
            }

            let pi = self.duals();
            // (column, direction, |reduced cost|)
            let mut entering: Option<(usize, f64, f64)> = None;
            for j in 0..n + m {
                let dir = match self.state[j] {
                    VarState::Basic(_) => continue,
                    _ if self.lb[j] == self.ub[j] => continue,
                    state => {
                        let d = self.reduced_cost(&pi, j);
                        match state {
                            VarState::Lower if d > opt_tol => (1.0, d),
                            VarState::Upper if d < -opt_tol => (-1.0, -d),
                            VarState::Free if d.abs() > opt_tol => (d.signum(), d.abs()),
                            _ => continue,
                        }
                    }
                };
                match entering {
                    None => entering = Some((j, dir.0, dir.1)),
                    Some((_, _, best)) if !bland && dir.1 > best => entering = Some((j, dir.0, dir.1)),
                    _ => {}
                }
                if bland && entering.is_some() {
                    break;
                }
            }
            let Some((j, dir, _)) = entering else {
                return Ok(PhaseEnd::Optimal);
            };

            let alpha = self.ftran(j);
            let span = self.ub[j] - self.lb[j];
            // (row, step, |pivot|)
            let mut leave: Option<(usize, f64, f64)> = None;
            for (i, &a) in alpha.iter().enumerate() {
                let delta = dir * a;
                let b = self.head[i];
                let step = if delta > piv_tol && self.lb[b].is_finite() {
                    (self.x[b] - self.lb[b]) / delta
                } else if delta < -piv_tol && self.ub[b].is_finite() {
                    (self.ub[b] - self.x[b]) / -delta
                } else {
                    continue;
                };
                let step = step.max(0.0);
                let better = match leave {
                    None => true,
                    Some((r, best, piv)) => {
                        if step < best - 1e-12 {
                            true
                        } else if step <= best + 1e-12 {
                            if bland {
                                b < self.head[r]
                            } else {
                                a.abs() > piv || (a.abs() == piv && b < self.head[r])
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some((i, step, a.abs()));
                }
            }

            let step = match leave {
                Some((_, s, _)) if s < span => s,
                _ if span.is_finite() => span,
                _ => {
                    if let Phase::One = phase {
                        // Phase one is bounded above by zero; treat as numerical trouble.
                        return Err(Error::Unbounded);
                    }
                    return Ok(PhaseEnd::Unbounded);
                }
            };

            self.iterations += 1;
            if step <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run >= degenerate_limit {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }

            for (i, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    let b = self.head[i];
                    self.x[b] -= dir * step * a;
                }
            }
            self.x[j] += dir * step;

            match leave {
                Some((r, s, _)) if s < span => {
                    let leaving = self.head[r];
                    if dir * alpha[r] > 0.0 {
                        self.x[leaving] = self.lb[leaving];
                        self.state[leaving] = VarState::Lower;
                    } else {
                        self.x[leaving] = self.ub[leaving];
                        self.state[leaving] = VarState::Upper;
                    }
                    self.head[r] = j;
                    self.state[j] = VarState::Basic(r);
                    self.pivot(r, &alpha);
                    self.since_refactor += 1;
                }
                _ => {
                    // bound flip
                    if dir > 0.0 {
                        self.x[j] = self.ub[j];
                        self.state[j] = VarState::Upper;
                    } else {
                        self.x[j] = self.lb[j];
                        self.state[j] = VarState::Lower;
                    }
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let inv = 1.0 / alpha[r];
        for k in 0..m {
            self.binv[r * m + k] *= inv;
        }
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (pivot_row, after) = rest.split_at_mut(m);
        for (i, row) in before.chunks_exact_mut(m).enumerate() {
            let f = alpha[i];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * p;
                }
            }
        }
        for (off, row) in after.chunks_exact_mut(m).enumerate() {
            let f = alpha[r + 1 + off];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * p;
                }
            }
        }
    }

    /// Recomputes the basis inverse from scratch and re-derives basic values.
    fn refactor(&mut self) {
        self.since_refactor = 0;
        let m = self.m;
        if m == 0 {
            return;
        }
        let mut basis = vec![0.0; m * m];
        for (r, &j) in self.head.iter().enumerate() {
            self.for_column(j, |i, a| basis[i * m + r] = a);
        }
        if let Some(inv) = invert(basis, m) {
            self.binv = inv;
        }

        let mut residual = self.rhs.clone();
        for j in 0..self.x.len() {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let xj = self.x[j];
            if xj != 0.0 {
                self.for_column(j, |i, a| residual[i] -= a * xj);
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            let v: f64 = row.iter().zip(&residual).map(|(b, q)| b * q).sum();
            self.x[self.head[r]] = v;
        }
    }

    fn finish(&self, status: LpStatus) -> LpSolution {
        let n = self.n;
        let x = self.x[..n].to_vec();
        let basis = self.state[..n]
            .iter()
            .map(|s| match s {
                VarState::Basic(_) => BasisStatus::Basic,
                VarState::Upper => BasisStatus::NonbasicAtUpper,
                VarState::Lower | VarState::Free => BasisStatus::NonbasicAtLower,
            })
            .collect();
        let (duals, objective) = match status {
            LpStatus::Optimal => (self.duals(), self.instance.objective_value(&x)),
            LpStatus::Infeasible => (vec![0.0; self.m], f64::NEG_INFINITY),
            LpStatus::Unbounded => (vec![0.0; self.m], f64::INFINITY),
        };
        LpSolution {
            status,
            x,
            duals,
            basis,
            objective,
            iterations: self.iterations,
        }
    }
}

/// Gauss-Jordan inversion with partial pivoting. `None` when singular.
fn invert(mut a: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&p, &q| a[p * m + col].abs().total_cmp(&a[q * m + col].abs()).then(q.cmp(&p)))?;
        if a[pivot * m + col].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for k in 0..m {
                a.swap(pivot * m + k, col * m + k);
                inv.swap(pivot * m + k, col * m + k);
            }
        }
        let p = 1.0 / a[col * m + col];
        for k in 0..m {
            a[col * m + k] *= p;
            inv[col * m + k] *= p;
        }
        for i in 0..m {
            if i == col {
                continue;
            }
            let f = a[i * m + col];
            if f != 0.0 {
                for k in 0..m {
                    a[i * m + k] -= f * a[col * m + k];
                    inv[i * m + k] -= f * inv[col * m + k];
                }
            }
        }
    }
    Some(inv)
}
