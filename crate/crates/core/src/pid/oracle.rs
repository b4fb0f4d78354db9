//! Exhaustive grid search over the feasible couplings, independent of the
//! first-order solver.
//!
//! For a fixed label `y`, the slice `q(., ., y)` is a transportation polytope
//! with row sums `p(y1, y)` and column sums `p(y2, y)`. With `r` nonzero rows
//! and `c` nonzero columns it has `(r - 1)(c - 1)` free cells; the last row and
//! column follow from the sums. Each free cell is gridded over
//! `[0, min(row, col)]` (for a single free cell, over its exact feasible
//! interval), infeasible completions are discarded, and every combination of
//! slice points is scored by `H(Y | Y1, Y2)`.

use super::MarginalConstraints;
use crate::error::{Error, Result};
use crate::info::{xlog2x, Joint3};

/// Free parameters beyond this are refused.
pub const MAX_FREE_PARAMETERS: usize = 6;
/// Upper bound on scored grid points.
pub const MAX_GRID_POINTS: u128 = 2_000_000_000;

struct SlicePoint {
    /// `-sum q log2 q` over the slice.
    entropy: f64,
    /// The slice cells, row-major `n x n`.
    cells: Vec<f64>,
}

fn slice_points(n: usize, rows: &[f64], cols: &[f64], resolution: usize) -> Vec<SlicePoint> {
    let r_idx: Vec<usize> = (0..n).filter(|&i| rows[i] > 0.0).collect();
    let c_idx: Vec<usize> = (0..n).filter(|&j| cols[j] > 0.0).collect();
    if r_idx.is_empty() || c_idx.is_empty() {
        return vec![SlicePoint {
            entropy: 0.0,
            cells: vec![0.0; n * n],
        }];
    }
    let free_r = &r_idx[..r_idx.len() - 1];
    let free_c = &c_idx[..c_idx.len() - 1];
    let free: Vec<(usize, usize)> = free_r
        .iter()
        .flat_map(|&i| free_c.iter().map(move |&j| (i, j)))
        .collect();
    let (last_r, last_c) = (*r_idx.last().unwrap(), *c_idx.last().unwrap());

    let bounds: Vec<(f64, f64)> = if free.len() == 1 {
        let (i, j) = free[0];
        // 2x2 slice: the corner cell is col_last - (row_i - x) >= 0
        let lo = (rows[i] - cols[last_c]).max(0.0);
        vec![(lo, rows[i].min(cols[j]))]
    } else {
        free.iter()
            .map(|&(i, j)| (0.0, rows[i].min(cols[j])))
            .collect()
    };

    let mut out = Vec::new();
    let mut counter = vec![0usize; free.len()];
    let tol = 1e-15;
    loop {
        let mut cells = vec![0.0; n * n];
        for (f, &(i, j)) in free.iter().enumerate() {
            let (lo, hi) = bounds[f];
            cells[i * n + j] = if hi > lo {
                lo + (hi - lo) * counter[f] as f64 / resolution as f64
            } else {
                lo
            };
        }
        let mut feasible = true;
        // complete last column of each free row
        for &i in free_r {
            let used: f64 = free_c.iter().map(|&j| cells[i * n + j]).sum();
            let v = rows[i] - used;
            feasible &= v >= -tol;
            cells[i * n + last_c] = v.max(0.0);
        }
        // complete last row
        for &j in &c_idx {
            let used: f64 = free_r.iter().map(|&i| cells[i * n + j]).sum();
            let v = cols[j] - used;
            feasible &= v >= -tol;
            cells[last_r * n + j] = v.max(0.0);
        }
        if feasible {
            let entropy = -cells.iter().map(|&x| xlog2x(x)).sum::<f64>();
            out.push(SlicePoint { entropy, cells });
        }

        // odometer over free parameters; degenerate intervals take one value
        let mut f = 0;
        loop {
            if f == free.len() {
                return out;
            }
            let (lo, hi) = bounds[f];
            let steps = if hi > lo { resolution } else { 0 };
            if counter[f] < steps {
                counter[f] += 1;
                break;
            }
            counter[f] = 0;
            f += 1;
        }
    }
}

/// Number of free coupling parameters of the feasible set.
pub fn free_parameters(c: &MarginalConstraints) -> usize {
    let n = c.size();
    (0..n)
        .map(|k| {
            let r = (0..n).filter(|&i| c.m1y().get(i, k) > 0.0).count();
            let s = (0..n).filter(|&j| c.m2y().get(j, k) > 0.0).count();
            r.saturating_sub(1) * s.saturating_sub(1)
        })
        .sum()
}

/// Grid point of the feasible set with the largest `H(Y | Y1, Y2)`.
pub fn brute_force_qstar(c: &MarginalConstraints, grid_resolution: usize) -> Result<Joint3> {
    if grid_resolution == 0 {
        return Err(Error::Config("grid resolution must be positive".into()));
    }
    let n = c.size();
    let params = free_parameters(c);
    if params > MAX_FREE_PARAMETERS {
        return Err(Error::OracleTooLarge(format!(
            "{params} free parameters (limit {MAX_FREE_PARAMETERS})"
        )));
    }
    let points_bound = (grid_resolution as u128 + 1).pow(params as u32);
    if points_bound > MAX_GRID_POINTS {
        return Err(Error::OracleTooLarge(format!(
            "{points_bound} grid points at resolution {grid_resolution}"
        )));
    }

    let slices: Vec<Vec<SlicePoint>> = (0..n)
        .map(|k| {
            let rows: Vec<f64> = (0..n).map(|i| c.m1y().get(i, k)).collect();
            let cols: Vec<f64> = (0..n).map(|j| c.m2y().get(j, k)).collect();
            slice_points(n, &rows, &cols, grid_resolution)
        })
        .collect();
    if slices.iter().any(Vec::is_empty) {
        return Err(Error::Infeasible(
            "a label slice has no feasible grid point".into(),
        ));
    }

    // Enumerate all slices but the last with an odometer; sweep the last
    // slice in the inner loop. pair mass accumulates across slices.
    let (inner, outer) = slices.split_last().unwrap();
    let mut choice = vec![0usize; outer.len()];
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut pair = vec![0.0; n * n];
    loop {
        pair.iter_mut().for_each(|x| *x = 0.0);
        let mut base_entropy = 0.0;
        for (s, &ci) in outer.iter().zip(&choice) {
            let pt = &s[ci];
            base_entropy += pt.entropy;
            for (p, x) in pair.iter_mut().zip(&pt.cells) {
                *p += x;
            }
        }
        let active: Vec<usize> = (0..n * n)
            .filter(|&ij| pair[ij] > 0.0 || inner.iter().any(|pt| pt.cells[ij] > 0.0))
            .collect();
        for (li, pt) in inner.iter().enumerate() {
            // H(Y|Y1,Y2) = H(Y1,Y2,Y) - H(Y1,Y2)
            let mut h = base_entropy + pt.entropy;
            for &ij in &active {
                h += xlog2x(pair[ij] + pt.cells[ij]);
            }
            if h > best.0 {
                let mut sel = choice.clone();
                sel.push(li);
                best = (h, sel);
            }
        }

        let mut f = 0;
        loop {
            if f == outer.len() {
                return Ok(assemble(n, &slices, &best.1));
            }
            if choice[f] + 1 < outer[f].len() {
                choice[f] += 1;
                break;
            }
            choice[f] = 0;
            f += 1;
        }
    }
}

fn assemble(n: usize, slices: &[Vec<SlicePoint>], sel: &[usize]) -> Joint3 {
    let mut mass = vec![0.0; n * n * n];
    for (k, (s, &ci)) in slices.iter().zip(sel).enumerate() {
        for (ij, &x) in s[ci].cells.iter().enumerate() {
            mass[ij * n + k] = x;
        }
    }
    Joint3::from_raw(n, mass)
}
