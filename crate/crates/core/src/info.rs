//! Discrete information measures over two- and three-variable joint
//! distributions. Every value is in bits and `0 log 0 = 0`.
//!
//! A [`Joint3`] holds `p(y1, y2, y)` over one shared label support of size
//! `n`, stored row-major so that cell `(i, j, k)` lives at `(i * n + j) * n + k`.

use serde::{Deserialize, Serialize};

use crate::dataset::TripleDataset;
use crate::error::{Error, Result};

/// Tolerance on total mass for a valid distribution.
pub const MASS_TOL: f64 = 1e-9;

/// `x log2 x` with the `0 log 0 = 0` convention.
#[inline]
pub fn xlog2x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Shannon entropy of a probability vector.
pub fn entropy(p: &[f64]) -> f64 {
    let h = -p.iter().map(|&x| xlog2x(x)).sum::<f64>();
    h.max(0.0)
}

fn check_mass(mass: &[f64]) -> Result<()> {
    if let Some(bad) = mass.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "entry {bad} is not a probability"
        )));
    }
    let total: f64 = mass.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidDistribution(format!(
            "total mass {total} != 1"
        )));
    }
    Ok(())
}

/// Joint distribution of two discrete variables, shape `rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint2 {
    rows: usize,
    cols: usize,
    mass: Vec<f64>,
}

impl Joint2 {
    pub fn new(rows: usize, cols: usize, mass: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || mass.len() != rows * cols {
            return Err(Error::InvalidDistribution(format!(
                "{} entries for shape {rows}x{cols}",
                mass.len()
            )));
        }
        check_mass(&mass)?;
        Ok(Joint2 { rows, cols, mass })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.mass[r * self.cols + c]
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.mass
            .chunks(self.cols)
            .map(|row| row.iter().sum())
            .collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.mass.chunks(self.cols) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        out
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.mass)
    }
}

/// `I(X1; X2) = sum p(x1,x2) log2 [p(x1,x2) / (p(x1) p(x2))]`.
pub fn mutual_information(dist: &Joint2) -> f64 {
    let pr = dist.row_marginal();
    let pc = dist.col_marginal();
    let mut mi = 0.0;
    for (r, row) in dist.mass.chunks(dist.cols).enumerate() {
        for (&p, &q) in row.iter().zip(&pc) {
            if p > 0.0 {
                mi += p * (p / (pr[r] * q)).log2();
            }
        }
    }
    mi.max(0.0)
}

/// One of the three variables of a [`Joint3`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Y1,
    Y2,
    Y,
}

impl Var {
    fn axis(self) -> usize {
        match self {
            Var::Y1 => 0,
            Var::Y2 => 1,
            Var::Y => 2,
        }
    }
}

/// Which pair of variables a two-way marginal keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairAxes {
    Y1Y,
    Y2Y,
    Y1Y2,
}

/// Joint distribution `p(y1, y2, y)` over a cubic shared support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Joint3Json", into = "Joint3Json")]
pub struct Joint3 {
    size: usize,
    mass: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Joint3Json {
    size: usize,
    mass: Vec<f64>,
}

impl TryFrom<Joint3Json> for Joint3 {
    type Error = Error;

    fn try_from(j: Joint3Json) -> Result<Self> {
        Joint3::new(j.size, j.mass)
    }
}

impl From<Joint3> for Joint3Json {
    fn from(j: Joint3) -> Self {
        Joint3Json {
            size: j.size,
            mass: j.mass,
        }
    }
}

impl Joint3 {
    pub fn new(size: usize, mass: Vec<f64>) -> Result<Self> {
        if size == 0 || mass.len() != size * size * size {
            return Err(Error::InvalidDistribution(format!(
                "{} entries for size {size} (expected {})",
                mass.len(),
                size * size * size
            )));
        }
        check_mass(&mass)?;
        Ok(Joint3 { size, mass })
    }

    /// Builds from nonnegative weights, normalizing them to unit mass.
    pub fn from_weights(size: usize, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDistribution(format!("total weight {total}")));
        }
        Self::new(size, weights.into_iter().map(|w| w / total).collect())
    }

    /// Wraps solver iterates without re-checking the mass invariant.
    pub(crate) fn from_raw(size: usize, mass: Vec<f64>) -> Self {
        debug_assert_eq!(mass.len(), size * size * size);
        Joint3 { size, mass }
    }

    pub fn point_mass(size: usize, y1: usize, y2: usize, y: usize) -> Result<Self> {
        let mut mass = vec![0.0; size * size * size];
        let idx = (y1 * size + y2) * size + y;
        *mass
            .get_mut(idx)
            .ok_or_else(|| Error::InvalidDistribution("point outside the support".into()))? = 1.0;
        Self::new(size, mass)
    }

    pub fn uniform(size: usize) -> Self {
        let cells = size * size * size;
        Joint3 {
            size,
            mass: vec![1.0 / cells as f64; cells],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn into_mass(self) -> Vec<f64> {
        self.mass
    }

    #[inline]
    pub fn index(&self, y1: usize, y2: usize, y: usize) -> usize {
        (y1 * self.size + y2) * self.size + y
    }

    #[inline]
    pub fn get(&self, y1: usize, y2: usize, y: usize) -> f64 {
        self.mass[self.index(y1, y2, y)]
    }

    fn at_axes(&self, idx: [usize; 3]) -> f64 {
        self.get(idx[0], idx[1], idx[2])
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.mass)
    }

    pub fn marginal(&self, var: Var) -> Vec<f64> {
        let n = self.size;
        let mut out = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let idx = [i, j, k];
                    out[idx[var.axis()]] += self.get(i, j, k);
                }
            }
        }
        out
    }

    /// Swaps the roles of `Y1` and `Y2`.
    pub fn swap_inputs(&self) -> Joint3 {
        let n = self.size;
        let mut mass = vec![0.0; self.mass.len()];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    mass[(j * n + i) * n + k] = self.get(i, j, k);
                }
            }
        }
        Joint3 { size: n, mass }
    }

    /// Applies one label permutation consistently to all three axes: the
    /// mass at `(i, j, k)` moves to `(perm[i], perm[j], perm[k])`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Joint3> {
        let n = self.size;
        let mut seen = vec![false; n];
        if perm.len() != n
            || perm
                .iter()
                .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::Config(format!(
                "{perm:?} is not a permutation of 0..{n}"
            )));
        }
        let mut mass = vec![0.0; self.mass.len()];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    mass[(perm[i] * n + perm[j]) * n + perm[k]] = self.get(i, j, k);
                }
            }
        }
        Ok(Joint3 { size: n, mass })
    }

    /// Largest absolute difference of the `(y1,y)` and `(y2,y)` marginals
    /// from those of `target`.
    pub fn marginal_residual(&self, target: &Joint3) -> f64 {
        let mut worst: f64 = 0.0;
        for which in [PairAxes::Y1Y, PairAxes::Y2Y] {
            let a = marginal_pair(self, which);
            let b = marginal_pair(target, which);
            for (x, y) in a.mass.iter().zip(&b.mass) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }
}

/// Normalized histogram of the weighted triples, with `smoothing` added to
/// every cell before normalizing.
pub fn empirical_joint(data: &TripleDataset, smoothing: f64) -> Result<Joint3> {
    if !(smoothing >= 0.0) || !smoothing.is_finite() {
        return Err(Error::Config(format!("smoothing {smoothing} must be >= 0")));
    }
    if data.samples().is_empty() {
        return Err(Error::Empty("triple dataset"));
    }
    let n = data.space().size();
    let mut weights = vec![smoothing; n * n * n];
    for s in data.samples() {
        weights[(s.y1.0 * n + s.y2.0) * n + s.y.0] += s.weight;
    }
    Joint3::from_weights(n, weights)
}

/// Exact two-way marginal of a [`Joint3`].
pub fn marginal_pair(dist: &Joint3, which: PairAxes) -> Joint2 {
    let n = dist.size;
    let mut mass = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let p = dist.get(i, j, k);
                let cell = match which {
                    PairAxes::Y1Y => i * n + k,
                    PairAxes::Y2Y => j * n + k,
                    PairAxes::Y1Y2 => i * n + j,
                };
                mass[cell] += p;
            }
        }
    }
    Joint2 {
        rows: n,
        cols: n,
        mass,
    }
}

/// `I(A; B | C)` where `given` is the remaining variable.
pub fn conditional_mi(dist: &Joint3, a: Var, b: Var, given: Var) -> f64 {
    assert!(
        a != b && a != given && b != given,
        "conditional MI needs three distinct variables"
    );
    let n = dist.size;
    let pc = dist.marginal(given);
    // p(a,c) and p(b,c)
    let mut pac = vec![0.0; n * n];
    let mut pbc = vec![0.0; n * n];
    let mut idx = [0usize; 3];
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                idx[a.axis()] = x;
                idx[b.axis()] = y;
                idx[given.axis()] = z;
                let p = dist.at_axes(idx);
                pac[x * n + z] += p;
                pbc[y * n + z] += p;
            }
        }
    }
    let mut total = 0.0;
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                idx[a.axis()] = x;
                idx[b.axis()] = y;
                idx[given.axis()] = z;
                let p = dist.at_axes(idx);
                if p > 0.0 {
                    // p(ab|c) / (p(a|c) p(b|c)) = p(abc) p(c) / (p(ac) p(bc))
                    total += p * (p * pc[z] / (pac[x * n + z] * pbc[y * n + z])).log2();
                }
            }
        }
    }
    total.max(0.0)
}

/// `I(Y1; Y2; Y) = I(Y1; Y2) - I(Y1; Y2 | Y)`; may be negative.
pub fn interaction_information(dist: &Joint3) -> f64 {
    mutual_information(&marginal_pair(dist, PairAxes::Y1Y2))
        - conditional_mi(dist, Var::Y1, Var::Y2, Var::Y)
}

/// `I(Y1, Y2; Y)`, treating the input pair as one variable.
pub fn joint_mi(dist: &Joint3) -> f64 {
    let n = dist.size;
    let flat = Joint2 {
        rows: n * n,
        cols: n,
        mass: dist.mass.clone(),
    };
    mutual_information(&flat)
}

/// `H(Y | Y1, Y2)`, the quantity the decomposition solver maximizes.
pub fn conditional_entropy_target(dist: &Joint3) -> f64 {
    conditional_entropy_of_mass(dist.size, &dist.mass)
}

pub(crate) fn conditional_entropy_of_mass(n: usize, mass: &[f64]) -> f64 {
    let mut h = 0.0;
    for pair in mass.chunks(n) {
        let total: f64 = pair.iter().sum();
        h += xlog2x(total) - pair.iter().map(|&x| xlog2x(x)).sum::<f64>();
    }
    h.max(0.0)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::Joint3;
    use proptest::prelude::*;

    /// Random joints with some exact zeros, sizes `2..=max_n`.
    pub fn arb_joint(max_n: usize) -> impl Strategy<Value = Joint3> {
        (2..=max_n).prop_flat_map(|n| {
            proptest::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.0f64..1.0], n * n * n)
                .prop_filter_map("all-zero weights", move |w| Joint3::from_weights(n, w).ok())
        })
    }

    pub fn xor() -> Joint3 {
        let mut m = vec![0.0; 8];
        for a in 0..2 {
            for b in 0..2 {
                m[(a * 2 + b) * 2 + (a ^ b)] = 0.25;
            }
        }
        Joint3::new(2, m).unwrap()
    }

    pub fn copy() -> Joint3 {
        let mut m = vec![0.0; 8];
        m[0] = 0.5;
        m[7] = 0.5;
        Joint3::new(2, m).unwrap()
    }

    pub fn and() -> Joint3 {
        let mut m = vec![0.0; 8];
        for a in 0..2 {
            for b in 0..2 {
                m[(a * 2 + b) * 2 + (a & b)] = 0.25;
            }
        }
        Joint3::new(2, m).unwrap()
    }

    pub fn unique1() -> Joint3 {
        let mut m = vec![0.0; 8];
        for a in 0..2 {
            for b in 0..2 {
                m[(a * 2 + b) * 2 + a] = 0.25;
            }
        }
        Joint3::new(2, m).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::dataset::{Triple, TripleDataset};
    use crate::label_space::{LabelIndex, LabelSpace};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn triple(y1: usize, y2: usize, y: usize, weight: f64) -> Triple {
        Triple {
            y1: LabelIndex(y1),
            y2: LabelIndex(y2),
            y: LabelIndex(y),
            weight,
        }
    }

    fn binary_data(samples: Vec<Triple>) -> TripleDataset {
        TripleDataset::new(LabelSpace::nominal(&["0", "1"]).unwrap(), samples).unwrap()
    }

    #[test]
    fn empirical_joint_examples() {
        let j = empirical_joint(
            &binary_data(vec![triple(0, 0, 0, 1.0), triple(1, 1, 1, 1.0)]),
            0.0,
        )
        .unwrap();
        assert_eq!(j.get(0, 0, 0), 0.5);
        assert_eq!(j.get(1, 1, 1), 0.5);

        let j = empirical_joint(&binary_data(vec![triple(1, 0, 1, 1.0)]), 0.0).unwrap();
        assert_eq!(j.get(1, 0, 1), 1.0);

        let j = empirical_joint(
            &binary_data(vec![triple(0, 0, 0, 1.0), triple(1, 1, 1, 3.0)]),
            0.0,
        )
        .unwrap();
        assert_eq!(j.get(0, 0, 0), 0.25);
        assert_eq!(j.get(1, 1, 1), 0.75);

        let j = empirical_joint(&binary_data(vec![triple(0, 0, 0, 1.0)]), 1.0).unwrap();
        assert_abs_diff_eq!(j.get(0, 0, 0), 2.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(j.get(1, 1, 1), 1.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(entropy(&[0.5, 0.5]), 1.0, epsilon = 1e-15);
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
        // -(0.25 log2 0.25 + 0.75 log2 0.75)
        assert_abs_diff_eq!(
            entropy(&[0.25, 0.75]),
            0.811_278_124_459_132_9,
            epsilon = 1e-12
        );
    }

    #[test]
    fn mutual_information_examples() {
        let indep = Joint2::new(2, 2, vec![0.25; 4]).unwrap();
        assert_abs_diff_eq!(mutual_information(&indep), 0.0, epsilon = 1e-15);
        let copy = Joint2::new(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert_abs_diff_eq!(mutual_information(&copy), 1.0, epsilon = 1e-15);
        // 0.8 log2(1.6) + 0.2 log2(0.4)
        let noisy = Joint2::new(2, 2, vec![0.4, 0.1, 0.1, 0.4]).unwrap();
        assert_abs_diff_eq!(
            mutual_information(&noisy),
            0.278_071_905_112_638,
            epsilon = 1e-12
        );
    }

    #[test]
    fn conditional_mi_examples() {
        let indep = Joint3::uniform(2);
        assert_abs_diff_eq!(
            conditional_mi(&indep, Var::Y1, Var::Y, Var::Y2),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            conditional_mi(&xor(), Var::Y1, Var::Y2, Var::Y),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            conditional_mi(&copy(), Var::Y1, Var::Y, Var::Y2),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn interaction_information_examples() {
        assert_abs_diff_eq!(interaction_information(&xor()), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(interaction_information(&copy()), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            interaction_information(&Joint3::uniform(3)),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn joint_mi_examples() {
        assert_abs_diff_eq!(joint_mi(&xor()), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(joint_mi(&Joint3::uniform(2)), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(joint_mi(&copy()), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn marginal_pair_examples() {
        let p = Joint3::point_mass(3, 0, 1, 2).unwrap();
        let m = marginal_pair(&p, PairAxes::Y1Y);
        assert_eq!(m.get(0, 2), 1.0);
        assert_eq!(m.mass().iter().sum::<f64>(), 1.0);

        let u = marginal_pair(&Joint3::uniform(3), PairAxes::Y2Y);
        for &x in u.mass() {
            assert_abs_diff_eq!(x, 1.0 / 9.0, epsilon = 1e-15);
        }
        assert_eq!(marginal_pair(&xor(), PairAxes::Y1Y2).mass(), &[0.25; 4]);
    }

    #[test]
    fn invalid_joint_rejected() {
        assert!(Joint3::new(2, vec![0.9 / 8.0; 8]).is_err());
        let mut m = vec![0.0; 8];
        m[0] = 1.5;
        m[1] = -0.5;
        assert!(Joint3::new(2, m).is_err());
        assert!(Joint3::new(2, vec![0.25; 4]).is_err());
    }

    #[test]
    fn joint3_json_round_trip() {
        let text = serde_json::to_string(&and()).unwrap();
        assert!(text.starts_with(r#"{"size":2,"mass":["#));
        let back: Joint3 = serde_json::from_str(&text).unwrap();
        assert_eq!(back, and());
        assert!(serde_json::from_str::<Joint3>(r#"{"size":1,"mass":[0.9]}"#).is_err());
    }

    proptest! {
        #[test]
        fn mi_bounded_by_entropies(j in arb_joint(4)) {
            let m = marginal_pair(&j, PairAxes::Y1Y);
            let mi = mutual_information(&m);
            let ha = entropy(&m.row_marginal());
            let hb = entropy(&m.col_marginal());
            prop_assert!(mi >= -1e-9);
            prop_assert!(mi <= ha.min(hb) + 1e-9);
        }

        #[test]
        fn chain_rule(j in arb_joint(4)) {
            let lhs = joint_mi(&j);
            let rhs = mutual_information(&marginal_pair(&j, PairAxes::Y1Y))
                + conditional_mi(&j, Var::Y2, Var::Y, Var::Y1);
            prop_assert!((lhs - rhs).abs() <= 1e-9, "{} vs {}", lhs, rhs);
        }

        #[test]
        fn interaction_information_symmetric(j in arb_joint(3)) {
            let base = interaction_information(&j);
            // I(Y1;Y) - I(Y1;Y|Y2) and I(Y2;Y) - I(Y2;Y|Y1) are the other orderings
            let via_y1y = mutual_information(&marginal_pair(&j, PairAxes::Y1Y))
                - conditional_mi(&j, Var::Y1, Var::Y, Var::Y2);
            let via_y2y = mutual_information(&marginal_pair(&j, PairAxes::Y2Y))
                - conditional_mi(&j, Var::Y2, Var::Y, Var::Y1);
            prop_assert!((base - via_y1y).abs() <= 1e-9);
            prop_assert!((base - via_y2y).abs() <= 1e-9);
            prop_assert!((base - interaction_information(&j.swap_inputs())).abs() <= 1e-9);
        }

        #[test]
        fn measures_invariant_under_relabeling(j in arb_joint(3), seed in 0u64..1000) {
            let n = j.size();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.rotate_left((seed as usize) % n);
            if seed % 2 == 0 { perm.reverse(); }
            let r = j.relabel(&perm).unwrap();
            prop_assert!((j.entropy() - r.entropy()).abs() <= 1e-9);
            prop_assert!((joint_mi(&j) - joint_mi(&r)).abs() <= 1e-9);
            prop_assert!((interaction_information(&j) - interaction_information(&r)).abs() <= 1e-9);
            prop_assert!((conditional_mi(&j, Var::Y1, Var::Y, Var::Y2)
                - conditional_mi(&r, Var::Y1, Var::Y, Var::Y2)).abs() <= 1e-9);
        }
    }
}
