//! Independent oracles and random instance generators shared by the
//! integration tests. Nothing here calls into the solvers under test.
#![allow(dead_code)]

use backdoor_core::{MipInstance, Row, Sense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FEAS_TOL: f64 = 1e-9;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_sense(rng: &mut ChaCha8Rng) -> Sense {
    match rng.random_range(0..10) {
        0..=6 => Sense::Le,
        7 | 8 => Sense::Ge,
        _ => Sense::Eq,
    }
}

/// Pure binary program with up to 8 variables and 6 rows. Integer
/// coefficients keep enumeration exact. A few cases come out infeasible.
pub fn random_binary_mip(seed: u64) -> MipInstance {
    let mut rng = rng(seed);
    let n = rng.random_range(1..=8);
    let m = rng.random_range(1..=6);
    let objective = (0..n).map(|_| rng.random_range(-10..=10) as f64).collect();
    let rows = (0..m)
        .map(|_| {
            let mut coeffs = Vec::new();
            for j in 0..n {
                let a = rng.random_range(-5..=5);
                if rng.random_bool(0.7) && a != 0 {
                    coeffs.push((j, a as f64));
                }
            }
            let sense = random_sense(&mut rng);
            let rhs = match sense {
                Sense::Le => rng.random_range(-2..=8),
                Sense::Ge => rng.random_range(-8..=2),
                Sense::Eq => rng.random_range(-2..=3),
            } as f64;
            Row::new(coeffs, sense, rhs)
        })
        .collect();
    MipInstance {
        id: format!("rand-{seed}"),
        objective,
        rows,
        lower: vec![0.0; n],
        upper: vec![1.0; n],
        integer: (0..n).collect(),
    }
}

/// Row activity `a^T x`.
pub fn activity(row: &Row, x: &[f64]) -> f64 {
    row.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
}

pub fn feasible(instance: &MipInstance, x: &[f64], tol: f64) -> bool {
    let bounds = x
        .iter()
        .zip(instance.lower.iter().zip(&instance.upper))
        .all(|(&v, (&l, &u))| v >= l - tol && v <= u + tol);
    bounds
        && instance.rows.iter().all(|r| {
            let lhs = activity(r, x);
            let scale = tol * (1.0 + r.rhs.abs());
            match r.sense {
                Sense::Le => lhs <= r.rhs + scale,
                Sense::Ge => lhs >= r.rhs - scale,
                Sense::Eq => (lhs - r.rhs).abs() <= scale,
            }
        })
}

pub fn objective(instance: &MipInstance, x: &[f64]) -> f64 {
    instance.objective.iter().zip(x).map(|(c, v)| c * v).sum()
}

/// Best objective over all 0/1 points, or `None` when none is feasible.
pub fn enumerate_binary(instance: &MipInstance) -> Option<f64> {
    let n = instance.objective.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let x: Vec<f64> = (0..n).map(|j| f64::from((mask >> j) & 1)).collect();
        if feasible(instance, &x, FEAS_TOL) {
            let z = objective(instance, &x);
            best = Some(best.map_or(z, |b: f64| b.max(z)));
        }
    }
    best
}

/// Bounded LP with up to 5 variables and 6 rows. Right-hand sides are
/// built around a point in the box so most cases are feasible; some are
/// shifted to make them infeasible.
pub fn random_bounded_lp(seed: u64) -> MipInstance {
    let mut rng = rng(seed);
    let n = rng.random_range(1..=5);
    let m = rng.random_range(1..=6);
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..1.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.random_range(0.5..5.0)).collect();
    let anchor: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| rng.random_range(*l..=*u)).collect();
    let objective = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let rows = (0..m)
        .map(|_| {
            let mut coeffs = Vec::new();
            for j in 0..n {
                let a = rng.random_range(-4.0..4.0);
                if rng.random_bool(0.8) {
                    coeffs.push((j, a));
                }
            }
            let sense = random_sense(&mut rng);
            let at_anchor: f64 = coeffs.iter().map(|&(j, a)| a * anchor[j]).sum();
            let slack = rng.random_range(0.0..2.0);
            let shift = if rng.random_bool(0.1) { 25.0 } else { 0.0 };
            let rhs = match sense {
                Sense::Le => at_anchor + slack - shift,
                Sense::Ge => at_anchor - slack + shift,
                Sense::Eq => at_anchor + shift,
            };
            Row::new(coeffs, sense, rhs)
        })
        .collect();
    MipInstance {
        id: format!("lp-{seed}"),
        objective,
        rows,
        lower,
        upper,
        integer: Vec::new(),
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// `None` when the system is (numerically) singular.
pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &k| a[i][col].abs().total_cmp(&a[k][col].abs()))?;
        if a[pivot][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let pivot_row = a[col].clone();
        for r in 0..n {
            if r != col {
                let f = a[r][col] / pivot_row[col];
                if f != 0.0 {
                    for (x, p) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                        *x -= f * p;
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Best objective over all basic feasible points of a bounded LP: every
/// choice of `n` tight constraints (rows or bounds) that determines a
/// unique feasible point. `None` when the LP is infeasible.
pub fn enumerate_vertices(instance: &MipInstance) -> Option<f64> {
    let n = instance.objective.len();
    let mut planes: Vec<(Vec<f64>, f64)> = instance
        .rows
        .iter()
        .map(|r| {
            let mut a = vec![0.0; n];
            for &(j, v) in &r.coeffs {
                a[j] += v;
            }
            (a, r.rhs)
        })
        .collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), instance.lower[j]));
        planes.push((e, instance.upper[j]));
    }
    let mut best: Option<f64> = None;
    let mut chosen = Vec::with_capacity(n);
    combinations(planes.len(), n, 0, &mut chosen, &mut |idx| {
        let a = idx.iter().map(|&i| planes[i].0.clone()).collect();
        let b = idx.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            if feasible(instance, &x, 1e-9) {
                let z = objective(instance, &x);
                best = Some(best.map_or(z, |v: f64| v.max(z)));
            }
        }
    });
    best
}

fn combinations(total: usize, k: usize, start: usize, chosen: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    for i in start..total {
        if total - i < k - chosen.len() {
            break;
        }
        chosen.push(i);
        combinations(total, k, i + 1, chosen, visit);
        chosen.pop();
    }
}

/// Upper bound on a maximization LP implied by row multipliers `duals`:
/// `b^T pi + sum_j max over [l_j, u_j] of (c_j - pi^T A_j) x_j`.
/// Valid whenever the multipliers have the right sign for each row sense.
pub fn lagrangian_bound(instance: &MipInstance, duals: &[f64]) -> f64 {
    let mut reduced = instance.objective.clone();
    let mut total = 0.0;
    for (row, &pi) in instance.rows.iter().zip(duals) {
        total += pi * row.rhs;
        for &(j, a) in &row.coeffs {
            reduced[j] -= pi * a;
        }
    }
    for (j, d) in reduced.into_iter().enumerate() {
        total += if d >= 0.0 { d * instance.upper[j] } else { d * instance.lower[j] };
    }
    total
}

/// Largest sign violation of row multipliers for a maximization problem:
/// `<=` rows need `pi >= 0`, `>=` rows need `pi <= 0`.
pub fn dual_sign_violation(instance: &MipInstance, duals: &[f64]) -> f64 {
    instance
        .rows
        .iter()
        .zip(duals)
        .map(|(r, &pi)| match r.sense {
            Sense::Le => (-pi).max(0.0),
            Sense::Ge => pi.max(0.0),
            Sense::Eq => 0.0,
        })
        .fold(0.0, f64::max)
}

/// Distance to the nearest integer, written out independently.
pub fn frac(v: f64) -> f64 {
    (v - v.round()).abs()
}
