//! Maximization of `H_q(Y | Y1, Y2)` over the couplings that match the
//! `(y1, y)` and `(y2, y)` marginals.
//!
//! Two methods are available. The default is a primal log-barrier method
//! (see [`super::barrier`]) whose iterates stay strictly positive, so the
//! gradient is exact everywhere and the Frank-Wolfe gap certifies the
//! result. The conditional-gradient method is kept as an alternative and as
//! the fallback for supports too large for dense Newton steps.
//!
//! Both use the same linear subproblem: it splits by label `y` into
//! independent transportation problems (see [`super::transport`]). With the
//! line-search step rule the conditional-gradient iteration is pairwise:
//! mass moves from the worst active atom to the new vertex.
//!
//! The objective is positively homogeneous, so at an input pair `(i, j)`
//! carrying no mass its directional derivative is `D * H(d / D)` rather than
//! linear. Any cost vector `c` with `sum_k 2^-c_k <= 1` bounds that from above,
//! so such pairs are linearized with a Kraft-normalized cost taken from a
//! running least-squares fit `a(i, y) + b(j, y)` of the gradient on the
//! support. The resulting gap is a true bound on the distance to the optimum.

use serde::{Deserialize, Serialize};

use super::barrier;
use super::transport::max_gain_transport;
use super::MarginalConstraints;
use crate::error::{Error, Result};
use crate::info::{conditional_entropy_of_mass, xlog2x, Joint3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// Classic step `2 / (t + 2)` toward the vertex.
    Diminishing,
    /// Pairwise step with exact one-dimensional line search.
    LineSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    InteriorPoint,
    FrankWolfe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once the certified gap (bits) is at most this.
    pub tol_objective: f64,
    pub tol_feasibility: f64,
    /// Newton steps or conditional-gradient steps, depending on `method`.
    pub max_iterations: usize,
    pub method: Method,
    /// Only used by [`Method::FrankWolfe`].
    pub step_rule: StepRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_objective: 1e-6,
            tol_feasibility: 1e-9,
            max_iterations: 10_000,
            method: Method::InteriorPoint,
            step_rule: StepRule::LineSearch,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_objective > 0.0) || !(self.tol_feasibility > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Optimizer output with its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub q_star: Joint3,
    /// `H_{q*}(Y | Y1, Y2)` in bits.
    pub objective: f64,
    pub iterations: usize,
    /// Upper bound on `max H - objective`, in bits.
    pub objective_gap: f64,
    pub feasibility_residual: f64,
    pub converged: bool,
}

/// Cell layout matches [`Joint3`]: `(i * n + j) * n + k`.
pub(super) struct Problem {
    pub(super) n: usize,
    /// `p(i, k)` at `i * n + k`
    pub(super) rows: Vec<f64>,
    /// `p(j, k)` at `j * n + k`
    pub(super) cols: Vec<f64>,
    pub(super) allowed: Vec<bool>,
}

impl Problem {
    fn new(c: &MarginalConstraints) -> Self {
        let n = c.size();
        let rows = c.m1y().mass().to_vec();
        let cols = c.m2y().mass().to_vec();
        let mut allowed = vec![false; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    allowed[(i * n + j) * n + k] = rows[i * n + k] > 0.0 && cols[j * n + k] > 0.0;
                }
            }
        }
        Problem {
            n,
            rows,
            cols,
            allowed,
        }
    }

    pub(super) fn objective(&self, q: &[f64]) -> f64 {
        conditional_entropy_of_mass(self.n, q)
    }

    /// Linear maximizer of `<g, s>` over the feasible set.
    fn lmo(&self, g: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut s = vec![0.0; n * n * n];
        for k in 0..n {
            let r_idx: Vec<usize> = (0..n).filter(|&i| self.rows[i * n + k] > 0.0).collect();
            let c_idx: Vec<usize> = (0..n).filter(|&j| self.cols[j * n + k] > 0.0).collect();
            if r_idx.is_empty() || c_idx.is_empty() {
                continue;
            }
            let supply: Vec<f64> = r_idx.iter().map(|&i| self.rows[i * n + k]).collect();
            let demand: Vec<f64> = c_idx.iter().map(|&j| self.cols[j * n + k]).collect();
            let gain: Vec<f64> = r_idx
                .iter()
                .flat_map(|&i| c_idx.iter().map(move |&j| g[(i * n + j) * n + k]))
                .collect();
            let flow = max_gain_transport(&gain, &supply, &demand);
            for (a, &i) in r_idx.iter().enumerate() {
                for (b, &j) in c_idx.iter().enumerate() {
                    s[(i * n + j) * n + k] = flow[a * c_idx.len() + b];
                }
            }
        }
        s
    }
}

/// Least-squares fit `a(i, k) + b(j, k) ~ g(i, j, k)` weighted by `q`, kept
/// across iterations and refined by a few alternating sweeps each time.
struct DualFit {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl DualFit {
    fn new(n: usize) -> Self {
        DualFit {
            a: vec![0.0; n * n],
            b: vec![0.0; n * n],
        }
    }

    fn refine(&mut self, p: &Problem, q: &[f64], g: &[f64], support: &[bool], sweeps: usize) {
        let n = p.n;
        for _ in 0..sweeps {
            for k in 0..n {
                for i in 0..n {
                    let (mut num, mut den) = (0.0, 0.0);
                    for j in 0..n {
                        let c = (i * n + j) * n + k;
                        if support[c] {
                            num += q[c] * (g[c] - self.b[j * n + k]);
                            den += q[c];
                        }
                    }
                    if den > 0.0 {
                        self.a[i * n + k] = num / den;
                    }
                }
                for j in 0..n {
                    let (mut num, mut den) = (0.0, 0.0);
                    for i in 0..n {
                        let c = (i * n + j) * n + k;
                        if support[c] {
                            num += q[c] * (g[c] - self.a[i * n + k]);
                            den += q[c];
                        }
                    }
                    if den > 0.0 {
                        self.b[j * n + k] = num / den;
                    }
                }
            }
        }
    }
}

/// Gradient of the objective, with zero-mass pairs linearized as described
/// in the module docs. `certified` is false when some allowed cell of a
/// massive pair is empty, where the true slope is infinite.
struct Gradient {
    g: Vec<f64>,
    certified: bool,
}

fn gradient(p: &Problem, q: &[f64], fit: &mut DualFit, sweeps: usize) -> Gradient {
    let n = p.n;
    let cells = n * n * n;
    let mut g = vec![f64::NAN; cells];
    let mut support = vec![false; cells];
    let mut certified = true;
    let mut max_finite: f64 = 0.0;
    let mut empty_cells = Vec::new();
    let mut zero_pairs = Vec::new();

    for ij in 0..n * n {
        let pair = &q[ij * n..(ij + 1) * n];
        let total: f64 = pair.iter().sum();
        if total <= 0.0 {
            if (0..n).any(|k| p.allowed[ij * n + k]) {
                zero_pairs.push(ij);
            }
            continue;
        }
        for k in 0..n {
            let c = ij * n + k;
            if !p.allowed[c] {
                continue;
            }
            if q[c] > 0.0 {
                g[c] = -(q[c] / total).log2();
                support[c] = true;
                max_finite = max_finite.max(g[c]);
            } else {
                empty_cells.push(c);
            }
        }
    }
    for c in empty_cells {
        g[c] = max_finite + 1.0;
        certified = false;
    }

    fit.refine(p, q, &g, &support, sweeps);
    for ij in zero_pairs {
        let (i, j) = (ij / n, ij % n);
        let ks: Vec<usize> = (0..n).filter(|&k| p.allowed[ij * n + k]).collect();
        let costs: Vec<f64> = ks
            .iter()
            .map(|&k| fit.a[i * n + k] + fit.b[j * n + k])
            .collect();
        let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
        // log2 sum 2^-c, shifted for stability
        let kraft = -lo + costs.iter().map(|&c| (lo - c).exp2()).sum::<f64>().log2();
        for (&k, &c) in ks.iter().zip(&costs) {
            g[ij * n + k] = c + kraft;
        }
    }
    for (c, v) in g.iter_mut().enumerate() {
        if !p.allowed[c] {
            *v = 0.0;
        }
    }
    Gradient { g, certified }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-sided slope and curvature of the objective at `m` along `d`. The
/// slope may be `+inf` when `d` feeds an empty cell of a massive pair.
fn slope(n: usize, m: &[f64], d: &[f64]) -> (f64, f64) {
    let mut s = 0.0;
    let mut curv = 0.0;
    for (pm, pd) in m.chunks(n).zip(d.chunks(n)) {
        let total: f64 = pm.iter().sum();
        let dtotal: f64 = pd.iter().sum();
        if total <= 0.0 {
            // homogeneous: f(eps d) = eps f(d)
            s += xlog2x(dtotal.max(0.0)) - pd.iter().map(|&x| xlog2x(x.max(0.0))).sum::<f64>();
            continue;
        }
        for (&x, &dx) in pm.iter().zip(pd) {
            if dx == 0.0 {
                continue;
            }
            if x > 0.0 {
                s -= dx * (x / total).log2();
                curv -= dx * dx / x;
            } else if dx > 0.0 {
                return (f64::INFINITY, f64::NEG_INFINITY);
            }
        }
        curv += dtotal * dtotal / total;
    }
    (s, curv / std::f64::consts::LN_2)
}

fn axpy(q: &[f64], gamma: f64, d: &[f64]) -> Vec<f64> {
    q.iter()
        .zip(d)
        .map(|(x, dx)| (x + gamma * dx).max(0.0))
        .collect()
}

/// Exact maximization of the concave `f(q + t d)` over `t` in `[0, t_max]`.
fn line_search(n: usize, q: &[f64], d: &[f64], t_max: f64) -> f64 {
    let (s0, _) = slope(n, q, d);
    if !(s0 > 0.0) {
        return 0.0;
    }
    let end = axpy(q, t_max, d);
    let neg: Vec<f64> = d.iter().map(|x| -x).collect();
    let (s_back, _) = slope(n, &end, &neg);
    if -s_back >= 0.0 {
        return t_max;
    }
    // safeguarded Newton on the slope, which is decreasing in t
    let (mut lo, mut hi) = (0.0, t_max);
    let mut t = 0.5 * t_max;
    for _ in 0..100 {
        let (s, c) = slope(n, &axpy(q, t, d), d);
        if s > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= 1e-15 * t_max.max(1e-300) || s == 0.0 {
            break;
        }
        let newton = if c < 0.0 { t - s / c } else { f64::NAN };
        t = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    t.clamp(0.0, t_max)
}

/// Coupling where `y1` and `y2` are conditionally independent given `y`.
pub fn feasible_initial(c: &MarginalConstraints) -> Joint3 {
    let n = c.size();
    let py = c.m1y().col_marginal();
    let mut mass = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if py[k] > 0.0 {
                    mass[(i * n + j) * n + k] = c.m1y().get(i, k) * c.m2y().get(j, k) / py[k];
                }
            }
        }
    }
    Joint3::from_raw(n, mass)
}

/// Restarts from slightly inside the polytope before giving up.
const MAX_NUDGES: usize = 40;

struct Atom {
    weight: f64,
    mass: Vec<f64>,
}

/// Conditional-gradient iterations from `q`. Returns the iterate, the
/// iteration count, the last certified gap and whether it met the tolerance.
fn frank_wolfe(p: &Problem, mut q: Vec<f64>, cfg: &SolverConfig) -> (Vec<f64>, usize, f64, bool) {
    let n = p.n;
    let q0 = q.clone();
    let mut atoms = vec![Atom {
        weight: 1.0,
        mass: q.clone(),
    }];
    let mut fit = DualFit::new(n);
    let mut gap = f64::INFINITY;
    let mut stalls = 0;
    for t in 0..cfg.max_iterations {
        let grad = gradient(p, &q, &mut fit, if t == 0 { 50 } else { 4 });
        let s = p.lmo(&grad.g);
        let fw_gap = (dot(&grad.g, &s) - dot(&grad.g, &q)).max(0.0);
        gap = if grad.certified {
            fw_gap
        } else {
            f64::INFINITY
        };
        if gap <= cfg.tol_objective {
            return (q, t, gap, true);
        }
        match cfg.step_rule {
            StepRule::Diminishing => {
                let gamma = 2.0 / (t as f64 + 2.0);
                for (x, sx) in q.iter_mut().zip(&s) {
                    *x += gamma * (sx - *x);
                }
            }
            StepRule::LineSearch => {
                if !pairwise_step(n, &mut q, &mut atoms, s, &grad.g) {
                    // Stuck on a face whose linearized costs overstate the
                    // gain: step slightly back inside, where the gradient is
                    // exact, and restart the active set.
                    stalls += 1;
                    if stalls > MAX_NUDGES {
                        log::debug!("no ascent direction at iteration {t}, gap {fw_gap:.3e}");
                        return (q, t + 1, gap, false);
                    }
                    let eps = 1e-3 * 0.5f64.powi(stalls as i32);
                    for (x, x0) in q.iter_mut().zip(&q0) {
                        *x += eps * (x0 - *x);
                    }
                    atoms = vec![Atom {
                        weight: 1.0,
                        mass: q.clone(),
                    }];
                }
            }
        }
    }
    (q, cfg.max_iterations, gap, false)
}

/// Certified gap at a point where every allowed cell carries mass, so the
/// gradient is exact. `None` otherwise.
pub(super) fn exact_gap(p: &Problem, q: &[f64]) -> Option<f64> {
    let n = p.n;
    let mut g = vec![0.0; q.len()];
    for (ij, pair) in q.chunks(n).enumerate() {
        let total: f64 = pair.iter().sum();
        for k in 0..n {
            let c = ij * n + k;
            if p.allowed[c] {
                if q[c] <= 0.0 {
                    return None;
                }
                g[c] = -(q[c] / total).log2();
            }
        }
    }
    let s = p.lmo(&g);
    Some((dot(&g, &s) - dot(&g, q)).max(0.0))
}

/// Maximizes `H_q(Y | Y1, Y2)` over couplings with the given marginals.
///
/// Hitting `max_iterations` is not an error: the best iterate is returned
/// with `converged == false`.
pub fn solve_qstar(c: &MarginalConstraints, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    let p = Problem::new(c);
    let n = p.n;
    let q0 = feasible_initial(c).into_mass();
    let (q, iterations, objective_gap, converged) = match cfg.method {
        Method::InteriorPoint => match barrier::solve(&p, q0.clone(), cfg) {
            Some(out) => out,
            None => frank_wolfe(&p, q0, cfg),
        },
        Method::FrankWolfe => frank_wolfe(&p, q0, cfg),
    };

    let q_star = Joint3::from_raw(n, q);
    let feasibility_residual = residual(&p, q_star.mass());
    let objective = p.objective(q_star.mass());
    if feasibility_residual > cfg.tol_feasibility {
        return Err(Error::SolverFailure(format!(
            "marginal residual {feasibility_residual:.3e} above {:.1e}",
            cfg.tol_feasibility
        )));
    }
    Ok(Solution {
        q_star,
        objective,
        iterations,
        objective_gap,
        feasibility_residual,
        converged,
    })
}

/// One pairwise step toward `s` away from the worst active atom, falling
/// back to a plain vertex step. Returns false when neither ascends.
fn pairwise_step(
    n: usize,
    q: &mut Vec<f64>,
    atoms: &mut Vec<Atom>,
    s: Vec<f64>,
    g: &[f64],
) -> bool {
    let away = atoms
        .iter()
        .enumerate()
        .map(|(idx, a)| (idx, dot(g, &a.mass)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(idx, _)| idx)
        .expect("active set is never empty");
    let d: Vec<f64> = s
        .iter()
        .zip(&atoms[away].mass)
        .map(|(a, b)| a - b)
        .collect();
    let gamma = line_search(n, q, &d, atoms[away].weight);
    if gamma > 0.0 {
        *q = axpy(q, gamma, &d);
        atoms[away].weight -= gamma;
        push_atom(atoms, s, gamma);
        let before = atoms.len();
        atoms.retain(|a| a.weight > 1e-15);
        if atoms.len() < before {
            // drop step: rebuild q exactly from the active set
            let total: f64 = atoms.iter().map(|a| a.weight).sum();
            q.iter_mut().for_each(|x| *x = 0.0);
            for a in atoms.iter_mut() {
                a.weight /= total;
                for (x, m) in q.iter_mut().zip(&a.mass) {
                    *x += a.weight * m;
                }
            }
        }
        return true;
    }
    let d_fw: Vec<f64> = s.iter().zip(q.iter()).map(|(a, b)| a - b).collect();
    let gamma = line_search(n, q, &d_fw, 1.0);
    if gamma <= 0.0 {
        return false;
    }
    *q = axpy(q, gamma, &d_fw);
    for a in atoms.iter_mut() {
        a.weight *= 1.0 - gamma;
    }
    push_atom(atoms, s, gamma);
    true
}

fn push_atom(atoms: &mut Vec<Atom>, s: Vec<f64>, weight: f64) {
    if let Some(a) = atoms
        .iter_mut()
        .find(|a| a.mass.iter().zip(&s).all(|(x, y)| (x - y).abs() <= 1e-15))
    {
        a.weight += weight;
    } else {
        atoms.push(Atom { weight, mass: s });
    }
}

fn residual(p: &Problem, q: &[f64]) -> f64 {
    let n = p.n;
    let mut m1 = vec![0.0; n * n];
    let mut m2 = vec![0.0; n * n];
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let x = q[(i * n + j) * n + k];
                m1[i * n + k] += x;
                m2[j * n + k] += x;
                total += x;
            }
        }
    }
    let mut worst = (total - 1.0).abs();
    for (a, b) in m1.iter().zip(&p.rows).chain(m2.iter().zip(&p.cols)) {
        worst = worst.max((a - b).abs());
    }
    if q.iter().any(|&x| x < 0.0) {
        worst = f64::INFINITY;
    }
    worst
}
