//! Primal log-barrier method.
//!
//! Maximizes `f(q) + mu * sum ln q_c` over the allowed cells for a falling
//! sequence of `mu`, each time by damped Newton steps in the null space of
//! the marginal constraints. Inside one label slice every allowed cell lies
//! in a full `rows x cols` block, so the null space is spanned by the
//! elementary cycles `E(i,j) - E(i,J) - E(I,j) + E(I,J)` around a pivot row
//! `I` and pivot column `J`.
//!
//! The objective is linear along the scaling of any single input pair, so its
//! Hessian alone is singular; the barrier term keeps the Newton system
//! definite. The barrier optimum for `mu` lies within `mu * cells` nats of the
//! true optimum, and the exact Frank-Wolfe gap is checked at every stage.

use nalgebra::{DMatrix, DVector};

use super::solver::{exact_gap, Problem, SolverConfig};
use crate::info::conditional_entropy_of_mass;

/// Newton systems larger than this are left to the conditional-gradient
/// method.
pub(super) const MAX_FREE_DIRECTIONS: usize = 400;

const MU_START: f64 = 1e-2;
const MU_FACTOR: f64 = 0.1;
const MU_FLOOR: f64 = 1e-18;
/// Newton steps allowed per barrier stage.
const STAGE_STEPS: usize = 60;

/// One null-space direction: four `(cell, sign)` entries.
type Cycle = [(usize, f64); 4];

fn cycles(p: &Problem) -> Vec<Cycle> {
    let n = p.n;
    let mut out = Vec::new();
    for k in 0..n {
        let r_idx: Vec<usize> = (0..n).filter(|&i| p.rows[i * n + k] > 0.0).collect();
        let c_idx: Vec<usize> = (0..n).filter(|&j| p.cols[j * n + k] > 0.0).collect();
        let heaviest = |idx: &[usize], m: &[f64]| {
            idx.iter()
                .copied()
                .max_by(|&a, &b| m[a * n + k].total_cmp(&m[b * n + k]))
        };
        let (Some(pi), Some(pj)) = (heaviest(&r_idx, &p.rows), heaviest(&c_idx, &p.cols)) else {
            continue;
        };
        let cell = |i: usize, j: usize| (i * n + j) * n + k;
        for &i in r_idx.iter().filter(|&&i| i != pi) {
            for &j in c_idx.iter().filter(|&&j| j != pj) {
                out.push([
                    (cell(i, j), 1.0),
                    (cell(i, pj), -1.0),
                    (cell(pi, j), -1.0),
                    (cell(pi, pj), 1.0),
                ]);
            }
        }
    }
    out
}

/// Barrier objective in nats, `-inf` outside the positive orthant.
fn barrier_value(p: &Problem, q: &[f64], mu: f64) -> f64 {
    let mut log_sum = 0.0;
    for (c, &x) in q.iter().enumerate() {
        if p.allowed[c] {
            if x <= 0.0 {
                return f64::NEG_INFINITY;
            }
            log_sum += x.ln();
        }
    }
    conditional_entropy_of_mass(p.n, q) * std::f64::consts::LN_2 + mu * log_sum
}

/// Damped Newton iterations toward the barrier optimum for `mu`. Returns the
/// number of steps taken, at most `budget`.
fn center(p: &Problem, q: &mut [f64], mu: f64, dirs: &[Cycle], budget: usize) -> usize {
    let n = p.n;
    let d = dirs.len();
    // columns touching each cell and each pair
    let mut by_cell: Vec<Vec<(usize, f64)>> = vec![Vec::new(); q.len()];
    for (a, cyc) in dirs.iter().enumerate() {
        for &(c, sign) in cyc {
            by_cell[c].push((a, sign));
        }
    }

    for step in 0..budget {
        let pair_total: Vec<f64> = q.chunks(n).map(|c| c.iter().sum()).collect();
        let mut grad = vec![0.0; q.len()];
        let mut h = DMatrix::<f64>::zeros(d, d);
        for c in 0..q.len() {
            if !p.allowed[c] {
                continue;
            }
            let x = q[c];
            grad[c] = -(x / pair_total[c / n]).ln() + mu / x;
            let w = 1.0 / x + mu / (x * x);
            for &(a, sa) in &by_cell[c] {
                for &(b, sb) in &by_cell[c] {
                    h[(a, b)] += w * sa * sb;
                }
            }
        }
        for (ij, &total) in pair_total.iter().enumerate() {
            if total <= 0.0 {
                continue;
            }
            let mut v: Vec<(usize, f64)> = Vec::new();
            for cell in &by_cell[ij * n..(ij + 1) * n] {
                for &(a, s) in cell {
                    match v.iter_mut().find(|e| e.0 == a) {
                        Some(e) => e.1 += s,
                        None => v.push((a, s)),
                    }
                }
            }
            for &(a, va) in &v {
                for &(b, vb) in &v {
                    h[(a, b)] -= va * vb / total;
                }
            }
        }
        let rhs = DVector::from_iterator(
            d,
            dirs.iter()
                .map(|cyc| cyc.iter().map(|&(c, s)| s * grad[c]).sum::<f64>()),
        );
        let Some(chol) = h.cholesky() else {
            log::debug!("barrier Newton system lost definiteness at mu {mu:.1e}");
            return step;
        };
        let y = chol.solve(&rhs);
        let decrement = rhs.dot(&y);
        if !(decrement > (1e-9 * mu).max(1e-30)) {
            return step;
        }

        let mut dq = vec![0.0; q.len()];
        for (a, cyc) in dirs.iter().enumerate() {
            for &(c, s) in cyc {
                dq[c] += s * y[a];
            }
        }
        let mut t: f64 = 1.0;
        for (x, dx) in q.iter().zip(&dq) {
            if *dx < 0.0 {
                t = t.min(0.99 * x / -dx);
            }
        }
        let f0 = barrier_value(p, q, mu);
        let slack = 1e-14 * f0.abs().max(1.0);
        let mut trial = vec![0.0; q.len()];
        let mut accepted = false;
        for _ in 0..60 {
            for ((out, x), dx) in trial.iter_mut().zip(q.iter()).zip(&dq) {
                *out = x + t * dx;
            }
            if barrier_value(p, &trial, mu) >= f0 + 0.25 * t * decrement - slack {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return step;
        }
        q.copy_from_slice(&trial);
    }
    budget
}

/// Runs the barrier path from the strictly positive feasible point `q`.
/// Returns `None` when the problem is too large for dense Newton steps.
pub(super) fn solve(
    p: &Problem,
    mut q: Vec<f64>,
    cfg: &SolverConfig,
) -> Option<(Vec<f64>, usize, f64, bool)> {
    let dirs = cycles(p);
    if dirs.len() > MAX_FREE_DIRECTIONS {
        return None;
    }
    let mut gap = exact_gap(p, &q)?;
    if gap <= cfg.tol_objective {
        return Some((q, 0, gap, true));
    }
    let mut iterations = 0;
    let mut mu = MU_START;
    while iterations < cfg.max_iterations && mu >= MU_FLOOR {
        let budget = STAGE_STEPS.min(cfg.max_iterations - iterations);
        iterations += center(p, &mut q, mu, &dirs, budget);
        gap = exact_gap(p, &q)?;
        if gap <= cfg.tol_objective {
            return Some((q, iterations, gap, true));
        }
        mu *= MU_FACTOR;
    }
    Some((q, iterations, gap, false))
}
