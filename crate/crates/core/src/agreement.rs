//! Inter-annotator agreement (Krippendorff's alpha) and confidence means.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::dataset::{
    Condition, CounterfactualRecord, DecompositionRecord, Order, PartialRecord, Score,
};
use crate::error::{Error, Result};
use crate::label_space::{normalize_answer, LabelKind, LabelSpace, RawLabel};

/// Distance used between two values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// 0 for equal values, 1 otherwise.
    Nominal,
    /// Squared difference of cumulative-frequency rank midpoints.
    Ordinal,
    /// Squared difference of the values.
    Interval,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nominal" => Ok(Metric::Nominal),
            "ordinal" => Ok(Metric::Ordinal),
            "interval" => Ok(Metric::Interval),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

/// Item by annotator grid of label indices; `None` marks a missing rating.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsMatrix {
    items: Vec<String>,
    annotators: Vec<String>,
    values: Vec<Vec<Option<usize>>>,
    metric: Metric,
}

impl RatingsMatrix {
    pub fn new(
        items: Vec<String>,
        annotators: Vec<String>,
        values: Vec<Vec<Option<usize>>>,
        metric: Metric,
    ) -> Result<Self> {
        if items.len() < 2 {
            return Err(Error::Empty("ratings matrix needs at least 2 items"));
        }
        if values.len() != items.len() || values.iter().any(|row| row.len() != annotators.len()) {
            return Err(Error::Config(format!(
                "ratings grid must be {} x {}",
                items.len(),
                annotators.len()
            )));
        }
        Ok(RatingsMatrix {
            items,
            annotators,
            values,
            metric,
        })
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn annotators(&self) -> &[String] {
        &self.annotators
    }

    pub fn values(&self) -> &[Vec<Option<usize>>] {
        &self.values
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Builds the grid from `(item, annotator, value)` observations.
    pub fn from_observations<I>(observations: I, metric: Metric) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String, usize)>,
    {
        let obs: Vec<_> = observations.into_iter().collect();
        let items: Vec<String> = obs
            .iter()
            .map(|o| o.0.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let annotators: Vec<String> = obs
            .iter()
            .map(|o| o.1.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut values = vec![vec![None; annotators.len()]; items.len()];
        for (item, annotator, v) in obs {
            let i = items.binary_search(&item).expect("item listed");
            let a = annotators
                .binary_search(&annotator)
                .expect("annotator listed");
            if values[i][a].replace(v).is_some() {
                return Err(Error::Duplicate(format!("{item}/{annotator}")));
            }
        }
        RatingsMatrix::new(items, annotators, values, metric)
    }
}

/// Why alpha has no value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Undefined {
    /// No item carries two or more ratings.
    NoPairableUnits,
    /// Every pairable value is the same, so expected disagreement is zero.
    NoVariation,
}

impl fmt::Display for Undefined {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Undefined::NoPairableUnits => "no item has ratings from two or more annotators",
            Undefined::NoVariation => "all pairable ratings are identical",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Value(f64),
    Undefined(Undefined),
}

impl Alpha {
    pub fn value(self) -> Option<f64> {
        match self {
            Alpha::Value(v) => Some(v),
            Alpha::Undefined(_) => None,
        }
    }
}

impl Serialize for Alpha {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Alpha::Value(v) => s.serialize_f64(*v),
            Alpha::Undefined(_) => s.serialize_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaReport {
    pub alpha: Alpha,
    /// Items with at least two ratings.
    pub n_units: usize,
    /// Ratings inside those items.
    pub n_pairable: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Krippendorff's alpha through the coincidence matrix.
pub fn krippendorff_alpha(m: &RatingsMatrix) -> AlphaReport {
    let units: Vec<Vec<usize>> = m
        .values
        .iter()
        .map(|row| row.iter().flatten().copied().collect::<Vec<_>>())
        .filter(|u| u.len() >= 2)
        .collect();
    let n_units = units.len();
    let n_pairable = units.iter().map(Vec::len).sum();
    let undefined = |why: Undefined| AlphaReport {
        alpha: Alpha::Undefined(why),
        n_units,
        n_pairable,
        reason: Some(why.to_string()),
    };
    if n_units == 0 {
        return undefined(Undefined::NoPairableUnits);
    }

    let size = units.iter().flatten().max().map_or(0, |&v| v + 1);
    let mut o = vec![0.0; size * size];
    for u in &units {
        let w = 1.0 / (u.len() - 1) as f64;
        for (a, &x) in u.iter().enumerate() {
            for (b, &y) in u.iter().enumerate() {
                if a != b {
                    o[x * size + y] += w;
                }
            }
        }
    }
    let marg: Vec<f64> = o.chunks(size).map(|r| r.iter().sum()).collect();
    let n: f64 = marg.iter().sum();
    let delta = distances(m.metric, &marg);

    let mut d_o = 0.0;
    let mut d_e = 0.0;
    for c in 0..size {
        for k in 0..size {
            let d = delta[c * size + k];
            d_o += o[c * size + k] * d;
            d_e += marg[c] * marg[k] * d;
        }
    }
    d_o /= n;
    d_e /= n * (n - 1.0);
    if d_e <= 0.0 {
        return undefined(Undefined::NoVariation);
    }
    AlphaReport {
        alpha: Alpha::Value(1.0 - d_o / d_e),
        n_units,
        n_pairable,
        reason: None,
    }
}

/// Squared distances between values `0..marg.len()`.
fn distances(metric: Metric, marg: &[f64]) -> Vec<f64> {
    let size = marg.len();
    let mut delta = vec![0.0; size * size];
    for c in 0..size {
        for k in 0..size {
            delta[c * size + k] = match metric {
                Metric::Nominal => f64::from(u8::from(c != k)),
                Metric::Interval => {
                    let d = c as f64 - k as f64;
                    d * d
                }
                Metric::Ordinal => {
                    let (lo, hi) = (c.min(k), c.max(k));
                    let span: f64 = marg[lo..=hi].iter().sum();
                    let d = span - (marg[c] + marg[k]) / 2.0;
                    d * d
                }
            };
        }
    }
    delta
}

/// Arithmetic mean of the selected confidence scores; records for which
/// `select` returns `None` are skipped.
pub fn mean_confidence<T, F>(records: &[T], select: F) -> Result<f64>
where
    F: Fn(&T) -> Option<Score>,
{
    let scores: Vec<f64> = records
        .iter()
        .filter_map(|r| select(r).map(|s| f64::from(s.get())))
        .collect();
    if scores.is_empty() {
        return Err(Error::Empty("confidence selection"));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Maps labels to category indices. QA answers are free text, so each
/// distinct normalized answer becomes its own nominal category.
struct Categories<'a> {
    space: &'a LabelSpace,
    answers: BTreeMap<String, usize>,
}

impl<'a> Categories<'a> {
    fn new(space: &'a LabelSpace) -> Self {
        Categories {
            space,
            answers: BTreeMap::new(),
        }
    }

    fn index(&mut self, raw: &RawLabel) -> Result<usize> {
        if self.space.kind() != LabelKind::QaBinary {
            return Ok(self.space.encode(raw)?.0);
        }
        let key = normalize_answer(&raw.to_string());
        if key.is_empty() {
            return Err(Error::EmptyAnswer);
        }
        let next = self.answers.len();
        Ok(*self.answers.entry(key).or_insert(next))
    }
}

/// Ratings of one partial-label condition.
pub fn ratings_from_partial(
    records: &[PartialRecord],
    space: &LabelSpace,
    condition: Condition,
    metric: Metric,
) -> Result<RatingsMatrix> {
    let mut cat = Categories::new(space);
    let mut obs = Vec::new();
    for r in records.iter().filter(|r| r.condition == condition) {
        obs.push((
            r.item_id.clone(),
            r.annotator_id.clone(),
            cat.index(&r.label)?,
        ));
    }
    RatingsMatrix::from_observations(obs, metric)
}

/// The four label columns of counterfactual files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterfactualMeasure {
    /// `y1`: first label when modality 1 was shown first.
    Y1,
    /// `y1+2`: revised label after seeing both, starting from modality 1.
    Y1Then2,
    /// `y2`
    Y2,
    /// `y2+1`
    Y2Then1,
}

impl CounterfactualMeasure {
    pub const ALL: [CounterfactualMeasure; 4] = [
        CounterfactualMeasure::Y1,
        CounterfactualMeasure::Y1Then2,
        CounterfactualMeasure::Y2,
        CounterfactualMeasure::Y2Then1,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CounterfactualMeasure::Y1 => "y1",
            CounterfactualMeasure::Y1Then2 => "y1_then_2",
            CounterfactualMeasure::Y2 => "y2",
            CounterfactualMeasure::Y2Then1 => "y2_then_1",
        }
    }

    fn order(self) -> Order {
        match self {
            CounterfactualMeasure::Y1 | CounterfactualMeasure::Y1Then2 => Order::FirstM1,
            CounterfactualMeasure::Y2 | CounterfactualMeasure::Y2Then1 => Order::FirstM2,
        }
    }

    fn is_first(self) -> bool {
        matches!(self, CounterfactualMeasure::Y1 | CounterfactualMeasure::Y2)
    }

    fn label(self, r: &CounterfactualRecord) -> &RawLabel {
        if self.is_first() {
            &r.label_first
        } else {
            &r.label_both
        }
    }

    pub fn confidence(self, r: &CounterfactualRecord) -> Option<Score> {
        (r.order == self.order()).then(|| {
            if self.is_first() {
                r.confidence_first
            } else {
                r.confidence_both
            }
        })
    }
}

pub fn ratings_from_counterfactual(
    records: &[CounterfactualRecord],
    space: &LabelSpace,
    measure: CounterfactualMeasure,
    metric: Metric,
) -> Result<RatingsMatrix> {
    let mut cat = Categories::new(space);
    let mut obs = Vec::new();
    for r in records.iter().filter(|r| r.order == measure.order()) {
        obs.push((
            r.item_id.clone(),
            r.annotator_id.clone(),
            cat.index(measure.label(r))?,
        ));
    }
    RatingsMatrix::from_observations(obs, metric)
}

/// The four direct ratings of decomposition files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    R,
    U1,
    U2,
    S,
}

impl Interaction {
    pub const ALL: [Interaction; 4] = [
        Interaction::R,
        Interaction::U1,
        Interaction::U2,
        Interaction::S,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Interaction::R => "r",
            Interaction::U1 => "u1",
            Interaction::U2 => "u2",
            Interaction::S => "s",
        }
    }

    pub fn rating(self, r: &DecompositionRecord) -> Score {
        match self {
            Interaction::R => r.r,
            Interaction::U1 => r.u1,
            Interaction::U2 => r.u2,
            Interaction::S => r.s,
        }
    }

    pub fn confidence(self, r: &DecompositionRecord) -> Score {
        match self {
            Interaction::R => r.conf_r,
            Interaction::U1 => r.conf_u1,
            Interaction::U2 => r.conf_u2,
            Interaction::S => r.conf_s,
        }
    }
}

/// Ratings on the 0-5 scale use the score itself as the value.
pub fn ratings_from_decomposition(
    records: &[DecompositionRecord],
    which: Interaction,
    metric: Metric,
) -> Result<RatingsMatrix> {
    let obs = records.iter().map(|r| {
        (
            r.item_id.clone(),
            r.annotator_id.clone(),
            usize::from(which.rating(r).get()),
        )
    });
    RatingsMatrix::from_observations(obs, metric)
}
