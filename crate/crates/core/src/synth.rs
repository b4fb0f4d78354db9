//! Ground-truth joint distributions, seeded sampling and synthetic
//! annotation files.
//!
//! Sampling uses ChaCha8 seeded through `SeedableRng::seed_from_u64`, one
//! uniform `f64` per sample inverted through the cumulative cell masses in
//! row-major `(y1, y2, y)` order.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::{
    Condition, CounterfactualRecord, Order, PartialRecord, Score, Triple, TripleDataset,
};
use crate::error::{Error, Result};
use crate::info::Joint3;
use crate::label_space::{LabelIndex, LabelSpace, RawLabel};

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    /// `y = (y1 + y2) mod n`.
    Xor,
    /// `y = min(y1, y2)`.
    And,
    /// `y = max(y1, y2)`.
    Or,
    /// `y1 = y2 = y`.
    Copy,
    /// `y = y1`, `y2` independent.
    Unique1,
    /// `y = y2`, `y1` independent.
    Unique2,
    /// The base gate with `y` replaced, with probability `eps`, by one of the
    /// other labels chosen uniformly.
    Noisy(Box<Gate>, f64),
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gate::Xor => f.write_str("xor"),
            Gate::And => f.write_str("and"),
            Gate::Or => f.write_str("or"),
            Gate::Copy => f.write_str("copy"),
            Gate::Unique1 => f.write_str("unique1"),
            Gate::Unique2 => f.write_str("unique2"),
            Gate::Noisy(base, eps) => write!(f, "noisy({base},{eps})"),
        }
    }
}

impl FromStr for Gate {
    type Err = Error;

    /// Accepts `xor`, `and`, `or`, `copy`, `unique1`, `unique2` and
    /// `noisy(<gate>,<eps>)`, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let gate = match t.as_str() {
            "xor" => Gate::Xor,
            "and" => Gate::And,
            "or" => Gate::Or,
            "copy" => Gate::Copy,
            "unique1" => Gate::Unique1,
            "unique2" => Gate::Unique2,
            _ => {
                let inner = t
                    .strip_prefix("noisy(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::Config(format!("unknown gate {s:?}")))?;
                let (base, eps) = inner
                    .rsplit_once(',')
                    .ok_or_else(|| Error::Config(format!("noisy gate needs (gate,eps): {s:?}")))?;
                let eps: f64 = eps
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad flip probability in {s:?}")))?;
                Gate::Noisy(Box::new(base.parse()?), eps)
            }
        };
        gate.validate()?;
        Ok(gate)
    }
}

impl Serialize for Gate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Gate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

impl Gate {
    fn validate(&self) -> Result<()> {
        if let Gate::Noisy(base, eps) = self {
            if !(0.0..0.5).contains(eps) {
                return Err(Error::Config(format!(
                    "flip probability {eps} not in [0, 0.5)"
                )));
            }
            base.validate()?;
        }
        Ok(())
    }

    /// The interaction carrying the most information for the gate.
    pub fn dominant(&self) -> Dominant {
        match self {
            Gate::Xor | Gate::And | Gate::Or => Dominant::S,
            Gate::Copy => Dominant::R,
            Gate::Unique1 => Dominant::U1,
            Gate::Unique2 => Dominant::U2,
            Gate::Noisy(base, _) => base.dominant(),
        }
    }
}

/// Name of a PID component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dominant {
    R,
    U1,
    U2,
    S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub gate: Gate,
    pub size: usize,
}

impl GateSpec {
    pub fn new(gate: Gate, size: usize) -> Result<Self> {
        gate.validate()?;
        if size < 2 {
            return Err(Error::Config(format!("gate size {size} < 2")));
        }
        Ok(GateSpec { gate, size })
    }

    pub fn binary(gate: Gate) -> Self {
        GateSpec::new(gate, 2).expect("valid binary gate")
    }
}

/// Inputs uniform over `n x n` (a single uniform label for `copy`), target
/// given by the gate.
pub fn canonical_joint(spec: &GateSpec) -> Joint3 {
    let n = spec.size;
    let mut mass = vec![0.0; n * n * n];
    fill(&spec.gate, n, &mut mass);
    Joint3::new(n, mass).expect("gate joints are normalized")
}

fn fill(gate: &Gate, n: usize, mass: &mut [f64]) {
    let cell = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
    let pair = 1.0 / (n * n) as f64;
    match gate {
        Gate::Copy => {
            for i in 0..n {
                mass[cell(i, i, i)] = 1.0 / n as f64;
            }
        }
        Gate::Noisy(base, eps) => {
            let mut clean = vec![0.0; mass.len()];
            fill(base, n, &mut clean);
            let spread = eps / (n - 1) as f64;
            for ij in 0..n * n {
                for k in 0..n {
                    let m = clean[ij * n + k];
                    for t in 0..n {
                        mass[ij * n + t] += m * if t == k { 1.0 - eps } else { spread };
                    }
                }
            }
        }
        _ => {
            for i in 0..n {
                for j in 0..n {
                    let k = match gate {
                        Gate::Xor => (i + j) % n,
                        Gate::And => i.min(j),
                        Gate::Or => i.max(j),
                        Gate::Unique1 => i,
                        Gate::Unique2 => j,
                        Gate::Copy | Gate::Noisy(..) => unreachable!(),
                    };
                    mass[cell(i, j, k)] += pair;
                }
            }
        }
    }
}

/// Nominal space named `"0"`, `"1"`, ... used for sampled data.
pub fn index_space(n: usize) -> Result<LabelSpace> {
    let names: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    LabelSpace::nominal(&names)
}

/// `count` i.i.d. triples from `p`, weight 1 each.
pub fn sample(p: &Joint3, count: usize, seed: u64) -> Result<TripleDataset> {
    if count == 0 {
        return Err(Error::Config("sample count must be positive".into()));
    }
    let n = p.size();
    let mut cdf = Vec::with_capacity(p.mass().len());
    let mut acc = 0.0;
    for &m in p.mass() {
        acc += m;
        cdf.push(acc);
    }
    let last = p.mass().iter().rposition(|&m| m > 0.0).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..count)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            // first cell whose cumulative mass exceeds u, never an empty cell
            let c = cdf.partition_point(|&x| x <= u).min(last);
            Triple {
                y1: LabelIndex(c / (n * n)),
                y2: LabelIndex(c / n % n),
                y: LabelIndex(c % n),
                weight: 1.0,
            }
        })
        .collect();
    TripleDataset::new(index_space(n)?, samples)
}

fn label(space: &LabelSpace, i: LabelIndex) -> RawLabel {
    RawLabel::Text(space.decode(i).expect("index inside space").to_string())
}

/// One item per unit-weight triple with annotator `a` labeling modality 1,
/// `b` modality 2 and `c` both. Confidences are 3, 3 and 5.
pub fn partial_records(data: &TripleDataset) -> Vec<PartialRecord> {
    let space = data.space();
    let mut out = Vec::with_capacity(3 * data.samples().len());
    for (i, t) in data.samples().iter().enumerate() {
        for (annotator, condition, y, conf) in [
            ("a", Condition::M1, t.y1, 3),
            ("b", Condition::M2, t.y2, 3),
            ("c", Condition::Both, t.y, 5),
        ] {
            out.push(PartialRecord {
                item_id: format!("item{i:06}"),
                annotator_id: annotator.into(),
                condition,
                label: label(space, y),
                confidence: Score::new(conf).expect("score in range"),
            });
        }
    }
    out
}

/// One item per triple: annotator `a` sees modality 1 first, annotator `b`
/// modality 2 first, and both settle on `y` once both modalities are shown.
pub fn counterfactual_records(data: &TripleDataset) -> Vec<CounterfactualRecord> {
    let space = data.space();
    let mut out = Vec::with_capacity(2 * data.samples().len());
    for (i, t) in data.samples().iter().enumerate() {
        for (annotator, order, first) in [("a", Order::FirstM1, t.y1), ("b", Order::FirstM2, t.y2)]
        {
            out.push(CounterfactualRecord {
                item_id: format!("item{i:06}"),
                annotator_id: annotator.into(),
                order,
                label_first: label(space, first),
                label_both: label(space, t.y),
                confidence_first: Score::new(3).expect("score in range"),
                confidence_both: Score::new(5).expect("score in range"),
            });
        }
    }
    out
}

/// Dense random joint of size `n`, cell weights uniform on `[0, 1)` with
/// about one cell in five set to zero.
pub fn random_joint<R: Rng>(n: usize, rng: &mut R) -> Joint3 {
    loop {
        let w: Vec<f64> = (0..n * n * n)
            .map(|_| {
                if rng.random_bool(0.2) {
                    0.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        if let Ok(j) = Joint3::from_weights(n, w) {
            return j;
        }
    }
}

/// Random joint whose feasible set has at most `max_free` free coupling
/// parameters: each label slice is supported on a random block of rows and
/// columns.
pub fn random_sparse_joint<R: Rng>(n: usize, max_free: usize, rng: &mut R) -> Joint3 {
    let mut w = vec![0.0; n * n * n];
    let mut budget = max_free;
    for k in 0..n {
        let mut r = rng.random_range(1..=n);
        let mut c = rng.random_range(1..=n);
        while (r - 1) * (c - 1) > budget {
            if r >= c {
                r -= 1;
            } else {
                c -= 1;
            }
        }
        budget -= (r - 1) * (c - 1);
        let rows = rand::seq::index::sample(rng, n, r);
        let cols = rand::seq::index::sample(rng, n, c);
        for i in rows.iter() {
            for j in cols.iter() {
                w[(i * n + j) * n + k] = 0.05 + rng.random::<f64>();
            }
        }
    }
    Joint3::from_weights(n, w).expect("every slice has positive mass")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::{empirical_joint, joint_mi};
    use crate::pid::constraints_from_joint;
    use crate::pid::oracle::free_parameters;

    fn h2(p: f64) -> f64 {
        -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
    }

    #[test]
    fn xor_has_four_quarter_cells() {
        let j = canonical_joint(&GateSpec::binary(Gate::Xor));
        assert_eq!(j.mass(), &[0.25, 0.0, 0.0, 0.25, 0.0, 0.25, 0.25, 0.0]);
    }

    #[test]
    fn copy_is_diagonal() {
        let j = canonical_joint(&GateSpec::binary(Gate::Copy));
        assert_eq!(j.get(0, 0, 0), 0.5);
        assert_eq!(j.get(1, 1, 1), 0.5);
        assert_eq!(j.mass().iter().filter(|&&m| m > 0.0).count(), 2);
    }

    #[test]
    fn noisy_xor_mutual_information() {
        let j = canonical_joint(&GateSpec::binary(Gate::Noisy(Box::new(Gate::Xor), 0.1)));
        let want = 1.0 - h2(0.1);
        assert!((joint_mi(&j) - want).abs() < 1e-12);
        assert!((want - 0.531).abs() < 1e-3);
    }

    #[test]
    fn every_gate_is_a_distribution() {
        for name in [
            "xor",
            "and",
            "or",
            "copy",
            "unique1",
            "unique2",
            "noisy(and,0.2)",
        ] {
            for n in 2..=4 {
                let j = canonical_joint(&GateSpec::new(name.parse().unwrap(), n).unwrap());
                let total: f64 = j.mass().iter().sum();
                assert!((total - 1.0).abs() < 1e-12, "{name} n={n}");
                assert!(j.mass().iter().all(|&m| m >= 0.0));
            }
        }
    }

    #[test]
    fn gate_names_round_trip() {
        let g: Gate = "Noisy(XOR, 0.1)".parse().unwrap();
        assert_eq!(g, Gate::Noisy(Box::new(Gate::Xor), 0.1));
        assert_eq!(g.to_string().parse::<Gate>().unwrap(), g);
        assert!("noisy(xor,0.5)".parse::<Gate>().is_err());
        assert!("nand".parse::<Gate>().is_err());
    }

    #[test]
    fn point_mass_samples_are_identical() {
        let p = Joint3::point_mass(3, 2, 0, 1).unwrap();
        let d = sample(&p, 50, 9).unwrap();
        assert!(d
            .samples()
            .iter()
            .all(|t| (t.y1.0, t.y2.0, t.y.0) == (2, 0, 1)));
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = canonical_joint(&GateSpec::binary(Gate::And));
        let write = |seed| {
            let mut buf = Vec::new();
            sample(&p, 500, seed).unwrap().write_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(write(4), write(4));
        assert_ne!(write(4), write(5));
    }

    #[test]
    fn xor_frequencies_concentrate() {
        let p = canonical_joint(&GateSpec::binary(Gate::Xor));
        let q = empirical_joint(&sample(&p, 10_000, 1).unwrap(), 0.0).unwrap();
        for (c, (&want, &got)) in p.mass().iter().zip(q.mass()).enumerate() {
            assert!((want - got).abs() < 0.02, "cell {c}: {got}");
        }
    }

    #[test]
    fn empirical_joint_approaches_source() {
        for gate in [
            Gate::Xor,
            Gate::And,
            Gate::Or,
            Gate::Copy,
            Gate::Unique1,
            Gate::Unique2,
        ] {
            let p = canonical_joint(&GateSpec::binary(gate.clone()));
            let mean_tv: f64 = (0..5)
                .map(|seed| {
                    let q = empirical_joint(&sample(&p, 100_000, seed).unwrap(), 0.0).unwrap();
                    0.5 * p
                        .mass()
                        .iter()
                        .zip(q.mass())
                        .map(|(a, b)| (a - b).abs())
                        .sum::<f64>()
                })
                .sum::<f64>()
                / 5.0;
            assert!(mean_tv <= 0.03, "{gate}: {mean_tv}");
        }
    }

    #[test]
    fn emitted_records_rebuild_the_triples() {
        use crate::dataset::{triples_from_counterfactual, triples_from_partial, Pairing};
        let p = canonical_joint(&GateSpec::new(Gate::Unique2, 3).unwrap());
        let data = sample(&p, 40, 2).unwrap();
        let back =
            triples_from_partial(&partial_records(&data), data.space(), Pairing::Rotation).unwrap();
        assert_eq!(back.samples(), data.samples());
        let cf = triples_from_counterfactual(&counterfactual_records(&data), data.space()).unwrap();
        let a = empirical_joint(&cf, 0.0).unwrap();
        let b = empirical_joint(&data, 0.0).unwrap();
        assert!(a
            .mass()
            .iter()
            .zip(b.mass())
            .all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn sparse_joints_respect_the_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let j = random_sparse_joint(3, 2, &mut rng);
            assert!(free_parameters(&constraints_from_joint(&j)) <= 2);
        }
    }
}
