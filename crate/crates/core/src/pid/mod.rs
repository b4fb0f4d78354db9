//! Bivariate partial information decomposition.
//!
//! Redundancy, unique information and synergy are read off the coupling
//! `q*` that maximizes `H_q(Y | Y1, Y2)` among all `q` sharing the pairwise
//! marginals `p(y1, y)` and `p(y2, y)`:
//!
//! * `R  = I_q*(Y1; Y2; Y)`
//! * `U1 = I_q*(Y1; Y | Y2)`
//! * `U2 = I_q*(Y2; Y | Y1)`
//! * `S  = I_p(Y1, Y2; Y) - I_q*(Y1, Y2; Y)`

mod barrier;
pub mod oracle;
pub mod solver;
pub mod transport;

use serde::{Deserialize, Serialize};

pub use oracle::{brute_force_qstar, free_parameters};
pub use solver::{feasible_initial, solve_qstar, Method, Solution, SolverConfig, StepRule};

use crate::dataset::TripleDataset;
use crate::error::{Error, Result};
use crate::info::{
    conditional_entropy_target, conditional_mi, empirical_joint, interaction_information, joint_mi,
    marginal_pair, mutual_information, Joint2, Joint3, PairAxes, Var,
};

/// Below this total information the decomposition is all zeros.
pub const DEGENERATE_TOTAL: f64 = 1e-9;
/// Negative components down to this are reported as zero.
pub const CLAMP_TOL: f64 = 1e-6;
/// Residual tolerance used by [`convert`] and [`decompose`].
pub const CONSISTENCY_TOL: f64 = 1e-4;

/// The pairwise marginals `p(y1, y)` and `p(y2, y)` defining the feasible set.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalConstraints {
    size: usize,
    m1y: Joint2,
    m2y: Joint2,
}

impl MarginalConstraints {
    pub fn new(m1y: Joint2, m2y: Joint2) -> Result<Self> {
        let n = m1y.rows();
        if m1y.cols() != n || m2y.rows() != n || m2y.cols() != n {
            return Err(Error::Infeasible(
                "marginals must be square and of equal size".into(),
            ));
        }
        let (a, b) = (m1y.col_marginal(), m2y.col_marginal());
        let worst = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        if worst > 1e-9 {
            return Err(Error::Infeasible(format!(
                "Y-marginals of the two pairwise tables differ by {worst:.3e}"
            )));
        }
        Ok(MarginalConstraints { size: n, m1y, m2y })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `p(y1, y)`, rows indexed by `y1`.
    pub fn m1y(&self) -> &Joint2 {
        &self.m1y
    }

    /// `p(y2, y)`, rows indexed by `y2`.
    pub fn m2y(&self) -> &Joint2 {
        &self.m2y
    }
}

pub fn constraints_from_joint(p: &Joint3) -> MarginalConstraints {
    MarginalConstraints {
        size: p.size(),
        m1y: marginal_pair(p, PairAxes::Y1Y),
        m2y: marginal_pair(p, PairAxes::Y2Y),
    }
}

/// Residuals of the five identities tying the decomposition to
/// information quantities of `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// `R + U1 - I(Y1; Y)`
    pub r_plus_u1: f64,
    /// `R + U2 - I(Y2; Y)`
    pub r_plus_u2: f64,
    /// `U1 + S - I(Y1; Y | Y2)`
    pub u1_plus_s: f64,
    /// `U2 + S - I(Y2; Y | Y1)`
    pub u2_plus_s: f64,
    /// `R - S - I(Y1; Y2; Y)`
    pub r_minus_s: f64,
    pub tol: f64,
    pub passed: bool,
}

impl ConsistencyReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.r_plus_u1,
            self.r_plus_u2,
            self.u1_plus_s,
            self.u2_plus_s,
            self.r_minus_s,
        ]
        .iter()
        .fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidResult {
    pub r: f64,
    pub u1: f64,
    pub u2: f64,
    pub s: f64,
    /// `I_p(Y1, Y2; Y)`
    pub total: f64,
    pub q_star: Joint3,
    pub iterations: usize,
    pub objective_gap: f64,
    pub feasibility_residual: f64,
    pub converged: bool,
    pub consistency: Option<ConsistencyReport>,
}

impl PidResult {
    pub fn components(&self) -> [f64; 4] {
        [self.r, self.u1, self.u2, self.s]
    }
}

fn clamp(name: &str, v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= -CLAMP_TOL {
        Ok(0.0)
    } else {
        Err(Error::SolverFailure(format!(
            "{name} = {v:.3e} is negative"
        )))
    }
}

/// Reads the decomposition off a solved coupling. Solver diagnostics are
/// left at their neutral values.
pub fn pid_from_solution(p: &Joint3, q_star: &Joint3) -> Result<PidResult> {
    if p.size() != q_star.size() {
        return Err(Error::Infeasible("q* and p differ in size".into()));
    }
    let residual = q_star.marginal_residual(p);
    if residual > 1e-6 {
        return Err(Error::Infeasible(format!(
            "q* misses the pairwise marginals of p by {residual:.3e}"
        )));
    }
    let total = joint_mi(p);
    let r = interaction_information(q_star);
    let u1 = conditional_mi(q_star, Var::Y1, Var::Y, Var::Y2);
    let u2 = conditional_mi(q_star, Var::Y2, Var::Y, Var::Y1);
    let s = total - joint_mi(q_star);
    Ok(PidResult {
        r: clamp("R", r)?,
        u1: clamp("U1", u1)?,
        u2: clamp("U2", u2)?,
        s: clamp("S", s)?,
        total,
        q_star: q_star.clone(),
        iterations: 0,
        objective_gap: 0.0,
        feasibility_residual: residual,
        converged: true,
        consistency: None,
    })
}

pub fn check_consistency(result: &PidResult, p: &Joint3, tol: f64) -> ConsistencyReport {
    let i1 = mutual_information(&marginal_pair(p, PairAxes::Y1Y));
    let i2 = mutual_information(&marginal_pair(p, PairAxes::Y2Y));
    let i1_given = conditional_mi(p, Var::Y1, Var::Y, Var::Y2);
    let i2_given = conditional_mi(p, Var::Y2, Var::Y, Var::Y1);
    let ii = interaction_information(p);
    let mut report = ConsistencyReport {
        r_plus_u1: result.r + result.u1 - i1,
        r_plus_u2: result.r + result.u2 - i2,
        u1_plus_s: result.u1 + result.s - i1_given,
        u2_plus_s: result.u2 + result.s - i2_given,
        r_minus_s: result.r - result.s - ii,
        tol,
        passed: false,
    };
    report.passed = report.max_residual() <= tol;
    report
}

/// Solves for `q*` and returns the decomposition with its consistency report.
///
/// A solve that stops at `max_iterations` is returned with
/// `converged == false`; callers decide whether that is fatal.
pub fn decompose(p: &Joint3, cfg: &SolverConfig) -> Result<PidResult> {
    cfg.validate()?;
    let total = joint_mi(p);
    let mut result = if total <= DEGENERATE_TOTAL {
        PidResult {
            r: 0.0,
            u1: 0.0,
            u2: 0.0,
            s: 0.0,
            total,
            q_star: p.clone(),
            iterations: 0,
            objective_gap: 0.0,
            feasibility_residual: 0.0,
            converged: true,
            consistency: None,
        }
    } else {
        let sol = solve_qstar(&constraints_from_joint(p), cfg)?;
        if !sol.converged {
            log::warn!(
                "solver stopped after {} iterations with gap {:.3e}",
                sol.iterations,
                sol.objective_gap
            );
        }
        let mut r = pid_from_solution(p, &sol.q_star)?;
        r.iterations = sol.iterations;
        r.objective_gap = sol.objective_gap;
        r.feasibility_residual = sol.feasibility_residual;
        r.converged = sol.converged;
        r
    };
    result.consistency = Some(check_consistency(&result, p, CONSISTENCY_TOL));
    Ok(result)
}

/// Empirical joint of `data`, then [`decompose`].
pub fn convert(data: &TripleDataset, smoothing: f64, cfg: &SolverConfig) -> Result<PidResult> {
    let p = empirical_joint(data, smoothing)?;
    decompose(&p, cfg)
}

/// `H(Y | Y1, Y2)` of a coupling; re-exported for callers comparing solvers.
pub fn objective(q: &Joint3) -> f64 {
    conditional_entropy_target(q)
}
