//! Finite label supports and the mapping from raw annotation values to
//! label indices.
//!
//! Four kinds of support are handled:
//!
//! | kind                | raw values accepted                  |
//! |---------------------|--------------------------------------|
//! | `nominal`           | one of the listed names              |
//! | `ordinal`           | a listed name, or its numeric value  |
//! | `binned-continuous` | any real in `[first_edge, last_edge]`|
//! | `qa-binary`         | `SAME` / `DIFFERENT`                 |

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a label within its [`LabelSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelIndex(pub usize);

impl fmt::Display for LabelIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelKind {
    Nominal,
    Ordinal,
    BinnedContinuous,
    QaBinary,
}

impl LabelKind {
    /// Whether label indices carry an order that averaging may use.
    pub fn is_ordered(self) -> bool {
        matches!(self, LabelKind::Ordinal | LabelKind::BinnedContinuous)
    }
}

/// A raw label value as it appears in an annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawLabel {
    Number(f64),
    Text(String),
}

impl RawLabel {
    fn as_number(&self) -> Option<f64> {
        match self {
            RawLabel::Number(v) => Some(*v),
            RawLabel::Text(s) => s.trim().parse::<f64>().ok().filter(|v| v.is_finite()),
        }
    }
}

impl fmt::Display for RawLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawLabel::Number(v) => v.fmt(f),
            RawLabel::Text(s) => s.fmt(f),
        }
    }
}

impl From<&str> for RawLabel {
    fn from(s: &str) -> Self {
        RawLabel::Text(s.to_string())
    }
}

impl From<f64> for RawLabel {
    fn from(v: f64) -> Self {
        RawLabel::Number(v)
    }
}

/// JSON description of a label space, `{"kind": ..., "values": [...], "bin_edges": [...]}`.
///
/// Ordinal spaces may give `"range": [lo, hi]` instead of `values`, which
/// expands to the integers `lo..=hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpaceConfig {
    pub kind: LabelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_edges: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[i64; 2]>,
}

impl LabelSpaceConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Three sentiment bins (negative, neutral, positive) over `[-3, 3]`.
    pub fn sentiment_bins() -> Self {
        LabelSpaceConfig {
            kind: LabelKind::BinnedContinuous,
            values: Some(vec!["negative".into(), "neutral".into(), "positive".into()]),
            bin_edges: Some(vec![-3.0, -1.0, 1.0, 3.0]),
            range: None,
        }
    }
}

pub const SAME: LabelIndex = LabelIndex(0);
pub const DIFFERENT: LabelIndex = LabelIndex(1);

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSpace {
    kind: LabelKind,
    values: Vec<String>,
    bin_edges: Option<Vec<f64>>,
}

impl LabelSpace {
    pub fn build(config: &LabelSpaceConfig) -> Result<Self> {
        let (values, bin_edges) = match config.kind {
            LabelKind::Nominal => {
                let values = config
                    .values
                    .clone()
                    .ok_or_else(|| Error::LabelSpace("nominal space needs `values`".into()))?;
                (values, None)
            }
            LabelKind::Ordinal => match (&config.values, config.range) {
                (Some(values), None) => (values.clone(), None),
                (None, Some([lo, hi])) => {
                    if hi < lo {
                        return Err(Error::LabelSpace(format!("empty range [{lo}, {hi}]")));
                    }
                    ((lo..=hi).map(|v| v.to_string()).collect(), None)
                }
                (Some(_), Some(_)) => {
                    return Err(Error::LabelSpace(
                        "ordinal space takes `values` or `range`, not both".into(),
                    ))
                }
                (None, None) => {
                    return Err(Error::LabelSpace(
                        "ordinal space needs `values` or `range`".into(),
                    ))
                }
            },
            LabelKind::BinnedContinuous => {
                let edges = config.bin_edges.clone().ok_or_else(|| {
                    Error::LabelSpace("binned-continuous space needs `bin_edges`".into())
                })?;
                if edges.iter().any(|e| !e.is_finite()) {
                    return Err(Error::LabelSpace("bin edges must be finite".into()));
                }
                if edges.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::LabelSpace(
                        "bin edges must be strictly ascending".into(),
                    ));
                }
                if edges.len() < 3 {
                    return Err(Error::LabelSpace(format!(
                        "{} bin edges give fewer than 2 labels",
                        edges.len()
                    )));
                }
                let values = match &config.values {
                    Some(v) if v.len() != edges.len() - 1 => {
                        return Err(Error::LabelSpace(format!(
                            "{} names for {} bins",
                            v.len(),
                            edges.len() - 1
                        )))
                    }
                    Some(v) => v.clone(),
                    None => edges
                        .windows(2)
                        .map(|w| format!("({},{}]", w[0], w[1]))
                        .collect(),
                };
                (values, Some(edges))
            }
            LabelKind::QaBinary => {
                let expected = vec!["SAME".to_string(), "DIFFERENT".to_string()];
                if let Some(v) = &config.values {
                    if *v != expected {
                        return Err(Error::LabelSpace(
                            "qa-binary values are fixed to [SAME, DIFFERENT]".into(),
                        ));
                    }
                }
                (expected, None)
            }
        };

        if values.len() < 2 {
            return Err(Error::LabelSpace(format!(
                "need at least 2 labels, got {}",
                values.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for v in &values {
            if !seen.insert(v.as_str()) {
                return Err(Error::LabelSpace(format!("duplicate value {v:?}")));
            }
        }
        Ok(LabelSpace {
            kind: config.kind,
            values,
            bin_edges,
        })
    }

    pub fn nominal<S: AsRef<str>>(values: &[S]) -> Result<Self> {
        Self::build(&LabelSpaceConfig {
            kind: LabelKind::Nominal,
            values: Some(values.iter().map(|s| s.as_ref().to_string()).collect()),
            bin_edges: None,
            range: None,
        })
    }

    pub fn ordinal_range(lo: i64, hi: i64) -> Result<Self> {
        Self::build(&LabelSpaceConfig {
            kind: LabelKind::Ordinal,
            values: None,
            bin_edges: None,
            range: Some([lo, hi]),
        })
    }

    pub fn binned(edges: &[f64]) -> Result<Self> {
        Self::build(&LabelSpaceConfig {
            kind: LabelKind::BinnedContinuous,
            values: None,
            bin_edges: Some(edges.to_vec()),
            range: None,
        })
    }

    pub fn qa_binary() -> Self {
        LabelSpace {
            kind: LabelKind::QaBinary,
            values: vec!["SAME".into(), "DIFFERENT".into()],
            bin_edges: None,
        }
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn bin_edges(&self) -> Option<&[f64]> {
        self.bin_edges.as_deref()
    }

    pub fn config(&self) -> LabelSpaceConfig {
        LabelSpaceConfig {
            kind: self.kind,
            values: Some(self.values.clone()),
            bin_edges: self.bin_edges.clone(),
            range: None,
        }
    }

    pub fn decode(&self, index: LabelIndex) -> Option<&str> {
        self.values.get(index.0).map(String::as_str)
    }

    /// Maps a raw value to its label index.
    ///
    /// Listed names match exactly. Ordinal spaces also match numerically, so
    /// `"+3"` and `3.0` both find the value `"3"`. Binned spaces take reals;
    /// a value on an interior edge belongs to the lower bin.
    pub fn encode(&self, raw: &RawLabel) -> Result<LabelIndex> {
        match self.kind {
            LabelKind::BinnedContinuous => {
                if let RawLabel::Text(s) = raw {
                    if let Some(i) = self.position(s) {
                        return Ok(i);
                    }
                }
                let v = raw
                    .as_number()
                    .ok_or_else(|| Error::UnknownLabel(raw.to_string()))?;
                self.encode_real(v)
            }
            LabelKind::Nominal | LabelKind::QaBinary => match raw {
                RawLabel::Text(s) => self
                    .position(s)
                    .ok_or_else(|| Error::UnknownLabel(s.clone())),
                RawLabel::Number(v) => self
                    .position(&v.to_string())
                    .ok_or_else(|| Error::UnknownLabel(v.to_string())),
            },
            LabelKind::Ordinal => {
                if let RawLabel::Text(s) = raw {
                    if let Some(i) = self.position(s) {
                        return Ok(i);
                    }
                }
                let v = raw
                    .as_number()
                    .ok_or_else(|| Error::UnknownLabel(raw.to_string()))?;
                self.values
                    .iter()
                    .position(|name| name.trim().parse::<f64>().ok() == Some(v))
                    .map(LabelIndex)
                    .ok_or_else(|| Error::UnknownLabel(raw.to_string()))
            }
        }
    }

    pub fn encode_str(&self, raw: &str) -> Result<LabelIndex> {
        self.encode(&RawLabel::Text(raw.to_string()))
    }

    fn encode_real(&self, v: f64) -> Result<LabelIndex> {
        let edges = self
            .bin_edges
            .as_deref()
            .expect("binned space always carries edges");
        let (lo, hi) = (edges[0], edges[edges.len() - 1]);
        if !(lo..=hi).contains(&v) {
            return Err(Error::OutOfRange { value: v, lo, hi });
        }
        // first interior edge >= v closes the bin
        let bin = edges[1..edges.len() - 1]
            .iter()
            .position(|&e| v <= e)
            .unwrap_or(edges.len() - 2);
        Ok(LabelIndex(bin))
    }

    fn position(&self, name: &str) -> Option<LabelIndex> {
        self.values.iter().position(|v| v == name).map(LabelIndex)
    }
}

/// Lowercases, trims, and collapses whitespace runs to one space.
pub fn normalize_answer(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Compares a free-text answer against the multimodal reference answer.
pub fn qa_binarize(answer: &str, reference: &str) -> Result<LabelIndex> {
    let a = normalize_answer(answer);
    let b = normalize_answer(reference);
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyAnswer);
    }
    Ok(if a == b { SAME } else { DIFFERENT })
}
