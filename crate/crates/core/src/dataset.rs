//! Annotation records and their aggregation into weighted label triples.
//!
//! Three schemas are read, from CSV or JSON:
//!
//! * partial: `item_id,annotator_id,condition,label,confidence`
//! * counterfactual: `item_id,annotator_id,order,label_first,label_both,confidence_first,confidence_both`
//! * decomposition: `item_id,annotator_id,r,u1,u2,s,conf_r,conf_u1,conf_u2,conf_s`
//!
//! JSON input is an array of objects with the same field names.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label_space::{qa_binarize, LabelIndex, LabelKind, LabelSpace, RawLabel, SAME};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Json,
}

impl InputFormat {
    /// `.json` files are JSON, everything else is CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => InputFormat::Json,
            _ => InputFormat::Csv,
        }
    }
}

/// Which modalities the annotator saw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    M1,
    M2,
    Both,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::M1, Condition::M2, Condition::Both];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::M1 => "m1",
            Condition::M2 => "m2",
            Condition::Both => "both",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "m1" => Ok(Condition::M1),
            "m2" => Ok(Condition::M2),
            "both" => Ok(Condition::Both),
            other => Err(format!("condition {other:?} is not one of m1, m2, both")),
        }
    }
}

/// Which modality a counterfactual annotator saw first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Order {
    #[serde(rename = "first-m1")]
    FirstM1,
    #[serde(rename = "first-m2")]
    FirstM2,
}

impl Order {
    pub fn as_str(self) -> &'static str {
        match self {
            Order::FirstM1 => "first-m1",
            Order::FirstM2 => "first-m2",
        }
    }
}

impl std::str::FromStr for Order {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "first-m1" => Ok(Order::FirstM1),
            "first-m2" => Ok(Order::FirstM2),
            other => Err(format!("order {other:?} is not one of first-m1, first-m2")),
        }
    }
}

/// A 0–5 rating or confidence score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Score(u8);

impl Score {
    pub const MAX: u8 = 5;

    pub fn new(v: u8) -> Option<Score> {
        (v <= Self::MAX).then_some(Score(v))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    fn checked(record: usize, field: &'static str, value: i64) -> Result<Score> {
        u8::try_from(value)
            .ok()
            .and_then(Score::new)
            .ok_or(Error::RatingRange {
                record,
                field,
                value,
            })
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialRecord {
    pub item_id: String,
    pub annotator_id: String,
    pub condition: Condition,
    pub label: RawLabel,
    pub confidence: Score,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualRecord {
    pub item_id: String,
    pub annotator_id: String,
    pub order: Order,
    pub label_first: RawLabel,
    pub label_both: RawLabel,
    pub confidence_first: Score,
    pub confidence_both: Score,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionRecord {
    pub item_id: String,
    pub annotator_id: String,
    pub r: Score,
    pub u1: Score,
    pub u2: Score,
    pub s: Score,
    pub conf_r: Score,
    pub conf_u1: Score,
    pub conf_u2: Score,
    pub conf_s: Score,
}

// Wire rows. CSV keeps labels as text so that re-serializing is exact;
// JSON labels may be numbers or strings.

#[derive(Debug, Serialize, Deserialize)]
struct PartialRow<L> {
    item_id: String,
    annotator_id: String,
    condition: String,
    label: L,
    confidence: i64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CounterfactualRow<L> {
    item_id: String,
    annotator_id: String,
    order: String,
    label_first: L,
    label_both: L,
    confidence_first: i64,
    confidence_both: i64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DecompositionRow {
    item_id: String,
    annotator_id: String,
    r: i64,
    u1: i64,
    u2: i64,
    s: i64,
    conf_r: i64,
    conf_u1: i64,
    conf_u2: i64,
    conf_s: i64,
}

const PARTIAL_COLUMNS: &[&str] = &[
    "item_id",
    "annotator_id",
    "condition",
    "label",
    "confidence",
];
const COUNTERFACTUAL_COLUMNS: &[&str] = &[
    "item_id",
    "annotator_id",
    "order",
    "label_first",
    "label_both",
    "confidence_first",
    "confidence_both",
];
const DECOMPOSITION_COLUMNS: &[&str] = &[
    "item_id",
    "annotator_id",
    "r",
    "u1",
    "u2",
    "s",
    "conf_r",
    "conf_u1",
    "conf_u2",
    "conf_s",
];

fn text_label(s: String) -> RawLabel {
    RawLabel::Text(s)
}

/// Reads rows of type `T`, returning `(row index, row)` pairs. An empty
/// input yields no rows.
fn read_rows<C, J, R>(
    mut reader: R,
    format: InputFormat,
    columns: &[&str],
    schema: &str,
) -> Result<Vec<(usize, Either<C, J>)>>
where
    C: DeserializeOwned,
    J: DeserializeOwned,
    R: Read,
{
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    if text.trim().is_empty() {
        log::warn!("{schema} input is empty");
        return Ok(Vec::new());
    }
    match format {
        InputFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .from_reader(text.as_bytes());
            let headers = rdr.headers()?.clone();
            for col in columns {
                if !headers.iter().any(|h| h == *col) {
                    return Err(Error::Schema {
                        record: 0,
                        message: format!("missing column `{col}`"),
                    });
                }
            }
            let mut out = Vec::new();
            for (i, row) in rdr.deserialize::<C>().enumerate() {
                let row = row.map_err(|e| Error::Schema {
                    record: i,
                    message: e.to_string(),
                })?;
                out.push((i, Either::Csv(row)));
            }
            if out.is_empty() {
                log::warn!("{schema} input has a header but no rows");
            }
            Ok(out)
        }
        InputFormat::Json => {
            let values: Vec<serde_json::Value> = serde_json::from_str(&text)?;
            if values.is_empty() {
                log::warn!("{schema} input is an empty array");
            }
            values
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    serde_json::from_value::<J>(v)
                        .map(|row| (i, Either::Json(row)))
                        .map_err(|e| Error::Schema {
                            record: i,
                            message: e.to_string(),
                        })
                })
                .collect()
        }
    }
}

enum Either<C, J> {
    Csv(C),
    Json(J),
}

fn check_unique(seen: &mut HashSet<String>, key: String) -> Result<()> {
    if !seen.insert(key.clone()) {
        return Err(Error::Duplicate(key));
    }
    Ok(())
}

pub fn parse_partial<R: Read>(reader: R, format: InputFormat) -> Result<Vec<PartialRecord>> {
    let rows = read_rows::<PartialRow<String>, PartialRow<RawLabel>, _>(
        reader,
        format,
        PARTIAL_COLUMNS,
        "partial",
    )?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows {
        let row = match row {
            Either::Csv(r) => PartialRow {
                item_id: r.item_id,
                annotator_id: r.annotator_id,
                condition: r.condition,
                label: text_label(r.label),
                confidence: r.confidence,
            },
            Either::Json(r) => r,
        };
        let condition: Condition = row
            .condition
            .parse()
            .map_err(|message| Error::Schema { record: i, message })?;
        let rec = PartialRecord {
            confidence: Score::checked(i, "confidence", row.confidence)?,
            item_id: row.item_id,
            annotator_id: row.annotator_id,
            condition,
            label: row.label,
        };
        check_unique(
            &mut seen,
            format!(
                "({}, {}, {})",
                rec.item_id,
                rec.annotator_id,
                condition.as_str()
            ),
        )?;
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_counterfactual<R: Read>(
    reader: R,
    format: InputFormat,
) -> Result<Vec<CounterfactualRecord>> {
    let rows = read_rows::<CounterfactualRow<String>, CounterfactualRow<RawLabel>, _>(
        reader,
        format,
        COUNTERFACTUAL_COLUMNS,
        "counterfactual",
    )?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows {
        let row = match row {
            Either::Csv(r) => CounterfactualRow {
                item_id: r.item_id,
                annotator_id: r.annotator_id,
                order: r.order,
                label_first: text_label(r.label_first),
                label_both: text_label(r.label_both),
                confidence_first: r.confidence_first,
                confidence_both: r.confidence_both,
            },
            Either::Json(r) => r,
        };
        let order: Order = row
            .order
            .parse()
            .map_err(|message| Error::Schema { record: i, message })?;
        let rec = CounterfactualRecord {
            confidence_first: Score::checked(i, "confidence_first", row.confidence_first)?,
            confidence_both: Score::checked(i, "confidence_both", row.confidence_both)?,
            item_id: row.item_id,
            annotator_id: row.annotator_id,
            order,
            label_first: row.label_first,
            label_both: row.label_both,
        };
        check_unique(
            &mut seen,
            format!("({}, {})", rec.item_id, rec.annotator_id),
        )?;
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_decomposition<R: Read>(
    reader: R,
    format: InputFormat,
) -> Result<Vec<DecompositionRecord>> {
    let rows = read_rows::<DecompositionRow, DecompositionRow, _>(
        reader,
        format,
        DECOMPOSITION_COLUMNS,
        "decomposition",
    )?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows {
        let row = match row {
            Either::Csv(r) | Either::Json(r) => r,
        };
        let rec = DecompositionRecord {
            r: Score::checked(i, "r", row.r)?,
            u1: Score::checked(i, "u1", row.u1)?,
            u2: Score::checked(i, "u2", row.u2)?,
            s: Score::checked(i, "s", row.s)?,
            conf_r: Score::checked(i, "conf_r", row.conf_r)?,
            conf_u1: Score::checked(i, "conf_u1", row.conf_u1)?,
            conf_u2: Score::checked(i, "conf_u2", row.conf_u2)?,
            conf_s: Score::checked(i, "conf_s", row.conf_s)?,
            item_id: row.item_id,
            annotator_id: row.annotator_id,
        };
        check_unique(
            &mut seen,
            format!("({}, {})", rec.item_id, rec.annotator_id),
        )?;
        out.push(rec);
    }
    Ok(out)
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], writer: W, format: InputFormat) -> Result<()> {
    match format {
        InputFormat::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        InputFormat::Json => serde_json::to_writer_pretty(writer, rows)?,
    }
    Ok(())
}

pub fn write_partial<W: Write>(
    records: &[PartialRecord],
    writer: W,
    format: InputFormat,
) -> Result<()> {
    let rows: Vec<_> = records
        .iter()
        .map(|r| PartialRow {
            item_id: r.item_id.clone(),
            annotator_id: r.annotator_id.clone(),
            condition: r.condition.as_str().to_string(),
            label: r.label.clone(),
            confidence: r.confidence.get().into(),
        })
        .collect();
    write_rows(&rows, writer, format)
}

pub fn write_counterfactual<W: Write>(
    records: &[CounterfactualRecord],
    writer: W,
    format: InputFormat,
) -> Result<()> {
    let rows: Vec<_> = records
        .iter()
        .map(|r| CounterfactualRow {
            item_id: r.item_id.clone(),
            annotator_id: r.annotator_id.clone(),
            order: r.order.as_str().to_string(),
            label_first: r.label_first.clone(),
            label_both: r.label_both.clone(),
            confidence_first: r.confidence_first.get().into(),
            confidence_both: r.confidence_both.get().into(),
        })
        .collect();
    write_rows(&rows, writer, format)
}

pub fn write_decomposition<W: Write>(
    records: &[DecompositionRecord],
    writer: W,
    format: InputFormat,
) -> Result<()> {
    let rows: Vec<_> = records
        .iter()
        .map(|r| DecompositionRow {
            item_id: r.item_id.clone(),
            annotator_id: r.annotator_id.clone(),
            r: r.r.get().into(),
            u1: r.u1.get().into(),
            u2: r.u2.get().into(),
            s: r.s.get().into(),
            conf_r: r.conf_r.get().into(),
            conf_u1: r.conf_u1.get().into(),
            conf_u2: r.conf_u2.get().into(),
            conf_s: r.conf_s.get().into(),
        })
        .collect();
    write_rows(&rows, writer, format)
}

/// One weighted `(y1, y2, y)` observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub y1: LabelIndex,
    pub y2: LabelIndex,
    pub y: LabelIndex,
    pub weight: f64,
}

/// Weighted triples over one label space, read as an empirical joint
/// distribution of `(y1, y2, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleDataset {
    space: LabelSpace,
    samples: Vec<Triple>,
}

impl TripleDataset {
    pub fn new(space: LabelSpace, samples: Vec<Triple>) -> Result<Self> {
        let n = space.size();
        for (i, t) in samples.iter().enumerate() {
            if !(t.weight > 0.0) || !t.weight.is_finite() {
                return Err(Error::Schema {
                    record: i,
                    message: format!("weight {} must be positive", t.weight),
                });
            }
            if t.y1.0 >= n || t.y2.0 >= n || t.y.0 >= n {
                return Err(Error::Schema {
                    record: i,
                    message: format!("label index outside a space of size {n}"),
                });
            }
        }
        if samples.is_empty() {
            return Err(Error::Empty("triple dataset"));
        }
        Ok(TripleDataset { space, samples })
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn samples(&self) -> &[Triple] {
        &self.samples
    }

    pub fn total_weight(&self) -> f64 {
        self.samples.iter().map(|t| t.weight).sum()
    }

    /// Writes `y1,y2,y,weight` rows of label indices.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["y1", "y2", "y", "weight"])?;
        for t in &self.samples {
            w.write_record([
                t.y1.to_string(),
                t.y2.to_string(),
                t.y.to_string(),
                t.weight.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, space: LabelSpace) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let samples = rdr
            .deserialize::<Triple>()
            .enumerate()
            .map(|(i, r)| {
                r.map_err(|e| Error::Schema {
                    record: i,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(space, samples)
    }
}

/// How partial labels from different annotators are combined into triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Cyclic rotation over annotators sorted by id, weight 1 per triple.
    #[default]
    Rotation,
    /// Every combination, sharing weight 1 per item.
    AllPairs,
}

/// Label encoder that knows about the QA binary space, where unimodal
/// answers are compared against the multimodal answer.
struct Encoder<'a> {
    space: &'a LabelSpace,
}

impl Encoder<'_> {
    fn unimodal(&self, raw: &RawLabel, multimodal: &RawLabel) -> Result<LabelIndex> {
        match self.space.kind() {
            LabelKind::QaBinary => qa_binarize(&raw.to_string(), &multimodal.to_string()),
            _ => self.space.encode(raw),
        }
    }

    fn multimodal(&self, raw: &RawLabel) -> Result<LabelIndex> {
        match self.space.kind() {
            LabelKind::QaBinary => qa_binarize(&raw.to_string(), &raw.to_string()).map(|_| SAME),
            _ => self.space.encode(raw),
        }
    }
}

/// Aggregates partial labels into triples, item by item.
///
/// Annotators for each condition are sorted by id. With rotation pairing,
/// triple `s` takes `y1` from annotator `s`, `y2` from `s + 1` and `y` from
/// `s + 2` (indices modulo the number of annotators for that condition), for
/// as many triples as the largest annotator group.
pub fn triples_from_partial(
    records: &[PartialRecord],
    space: &LabelSpace,
    pairing: Pairing,
) -> Result<TripleDataset> {
    let mut items: BTreeMap<&str, BTreeMap<Condition, BTreeMap<&str, &PartialRecord>>> =
        BTreeMap::new();
    for r in records {
        items
            .entry(&r.item_id)
            .or_default()
            .entry(r.condition)
            .or_default()
            .insert(&r.annotator_id, r);
    }
    if items.is_empty() {
        return Err(Error::Empty("partial records"));
    }

    let enc = Encoder { space };
    let mut samples = Vec::new();
    for (item, by_condition) in &items {
        let group = |c: Condition| -> Result<Vec<&PartialRecord>> {
            by_condition
                .get(&c)
                .map(|m| m.values().copied().collect())
                .ok_or_else(|| Error::MissingCondition {
                    item: item.to_string(),
                    what: format!("condition {}", c.as_str()),
                })
        };
        let (g1, g2, g12) = (
            group(Condition::M1)?,
            group(Condition::M2)?,
            group(Condition::Both)?,
        );

        let mut emit = |a: &PartialRecord, b: &PartialRecord, c: &PartialRecord, weight| {
            samples.push(Triple {
                y1: enc.unimodal(&a.label, &c.label)?,
                y2: enc.unimodal(&b.label, &c.label)?,
                y: enc.multimodal(&c.label)?,
                weight,
            });
            Ok::<_, Error>(())
        };
        match pairing {
            Pairing::Rotation => {
                let rounds = g1.len().max(g2.len()).max(g12.len());
                for s in 0..rounds {
                    emit(
                        g1[s % g1.len()],
                        g2[(s + 1) % g2.len()],
                        g12[(s + 2) % g12.len()],
                        1.0,
                    )?;
                }
            }
            Pairing::AllPairs => {
                let weight = 1.0 / (g1.len() * g2.len() * g12.len()) as f64;
                for a in &g1 {
                    for b in &g2 {
                        for c in &g12 {
                            emit(a, b, c, weight)?;
                        }
                    }
                }
            }
        }
    }
    TripleDataset::new(space.clone(), samples)
}

/// Average of two ordinal indices, with an exact half rounded away from the
/// middle of the scale. On even-sized scales a mean that lands exactly on
/// the midpoint rounds up.
pub fn ordinal_average(a: LabelIndex, b: LabelIndex, size: usize) -> LabelIndex {
    let sum = a.0 + b.0;
    if sum.is_multiple_of(2) {
        return LabelIndex(sum / 2);
    }
    let lower = sum / 2;
    // compare mean (sum / 2) with midpoint ((size - 1) / 2), both doubled
    if sum + 1 > size {
        LabelIndex(lower + 1)
    } else if sum + 1 < size {
        LabelIndex(lower)
    } else {
        LabelIndex(lower + 1)
    }
}

/// Aggregates counterfactual labels into triples, each item carrying total
/// weight 1.
///
/// First-m1 and first-m2 annotators are sorted by id and paired by rank when
/// the groups have equal size, otherwise every cross pair is used. For a pair,
/// `y1` and `y2` are the first-seen labels and `y` combines the two
/// both-modality labels: their rounded mean on ordered spaces, or two
/// half-weight triples otherwise.
pub fn triples_from_counterfactual(
    records: &[CounterfactualRecord],
    space: &LabelSpace,
) -> Result<TripleDataset> {
    let mut items: BTreeMap<&str, BTreeMap<Order, BTreeMap<&str, &CounterfactualRecord>>> =
        BTreeMap::new();
    for r in records {
        items
            .entry(&r.item_id)
            .or_default()
            .entry(r.order)
            .or_default()
            .insert(&r.annotator_id, r);
    }
    if items.is_empty() {
        return Err(Error::Empty("counterfactual records"));
    }

    let enc = Encoder { space };
    let mut samples = Vec::new();
    for (item, by_order) in &items {
        let group = |o: Order| -> Result<Vec<&CounterfactualRecord>> {
            by_order
                .get(&o)
                .map(|m| m.values().copied().collect())
                .ok_or_else(|| Error::MissingCondition {
                    item: item.to_string(),
                    what: format!("order {}", o.as_str()),
                })
        };
        let (first1, first2) = (group(Order::FirstM1)?, group(Order::FirstM2)?);
        let pairs: Vec<(&CounterfactualRecord, &CounterfactualRecord)> =
            if first1.len() == first2.len() {
                first1.iter().copied().zip(first2.iter().copied()).collect()
            } else {
                first1
                    .iter()
                    .flat_map(|a| first2.iter().map(move |b| (*a, *b)))
                    .collect()
            };
        let weight = 1.0 / pairs.len() as f64;

        for (a, b) in pairs {
            if space.kind().is_ordered() {
                let y12 = space.encode(&a.label_both)?;
                let y21 = space.encode(&b.label_both)?;
                samples.push(Triple {
                    y1: space.encode(&a.label_first)?,
                    y2: space.encode(&b.label_first)?,
                    y: ordinal_average(y12, y21, space.size()),
                    weight,
                });
                continue;
            }
            let mut split = Vec::with_capacity(2);
            for reference in [&a.label_both, &b.label_both] {
                split.push(Triple {
                    y1: enc.unimodal(&a.label_first, reference)?,
                    y2: enc.unimodal(&b.label_first, reference)?,
                    y: enc.multimodal(reference)?,
                    weight: weight / 2.0,
                });
            }
            if split[0].y1 == split[1].y1 && split[0].y2 == split[1].y2 && split[0].y == split[1].y
            {
                samples.push(Triple { weight, ..split[0] });
            } else {
                samples.extend(split);
            }
        }
    }
    TripleDataset::new(space.clone(), samples)
}

/// Mean direct ratings and confidences across all records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub n_records: usize,
    pub r: f64,
    pub u1: f64,
    pub u2: f64,
    pub s: f64,
    pub conf_r: f64,
    pub conf_u1: f64,
    pub conf_u2: f64,
    pub conf_s: f64,
}

pub fn summarize_decomposition(records: &[DecompositionRecord]) -> Result<DecompositionSummary> {
    if records.is_empty() {
        return Err(Error::Empty("decomposition records"));
    }
    let n = records.len() as f64;
    let mean = |f: fn(&DecompositionRecord) -> Score| {
        records.iter().map(|r| f64::from(f(r).get())).sum::<f64>() / n
    };
    Ok(DecompositionSummary {
        n_records: records.len(),
        r: mean(|r| r.r),
        u1: mean(|r| r.u1),
        u2: mean(|r| r.u2),
        s: mean(|r| r.s),
        conf_r: mean(|r| r.conf_r),
        conf_u1: mean(|r| r.conf_u1),
        conf_u2: mean(|r| r.conf_u2),
        conf_s: mean(|r| r.conf_s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PARTIAL_HEADER: &str = "item_id,annotator_id,condition,label,confidence\n";
    const CF_HEADER: &str =
        "item_id,annotator_id,order,label_first,label_both,confidence_first,confidence_both\n";
    const DEC_HEADER: &str = "item_id,annotator_id,r,u1,u2,s,conf_r,conf_u1,conf_u2,conf_s\n";

    fn partial_csv(body: &str) -> Result<Vec<PartialRecord>> {
        parse_partial(
            format!("{PARTIAL_HEADER}{body}").as_bytes(),
            InputFormat::Csv,
        )
    }

    fn binary() -> LabelSpace {
        LabelSpace::nominal(&["0", "1"]).unwrap()
    }

    #[test]
    fn parse_partial_rows() {
        let recs = partial_csv("i1,a,m1,yes,4\n").unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].condition, Condition::M1);
        assert_eq!(recs[0].label, RawLabel::Text("yes".into()));
        assert_eq!(recs[0].confidence.get(), 4);

        assert!(matches!(
            partial_csv("i1,a,m1,yes,7\n"),
            Err(Error::RatingRange { value: 7, .. })
        ));
        let missing = parse_partial(
            "item_id,annotator_id,label,confidence\ni1,a,yes,4\n".as_bytes(),
            InputFormat::Csv,
        );
        assert!(
            matches!(missing, Err(Error::Schema { message, .. }) if message.contains("condition"))
        );
        assert!(matches!(
            partial_csv("i1,a,m1,yes,4\ni1,a,m1,no,3\n"),
            Err(Error::Duplicate(_))
        ));
        assert!(matches!(
            partial_csv("i1,a,m3,yes,4\n"),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn parse_partial_json() {
        let text = r#"[{"item_id":"i1","annotator_id":"a","condition":"both","label":2,"confidence":5},
                       {"item_id":"i1","annotator_id":"a","condition":"m2","label":"x","confidence":0}]"#;
        let recs = parse_partial(text.as_bytes(), InputFormat::Json).unwrap();
        assert_eq!(recs[0].label, RawLabel::Number(2.0));
        assert_eq!(recs[1].label, RawLabel::Text("x".into()));
        let bad = r#"[{"item_id":"i1","annotator_id":"a","label":2,"confidence":5}]"#;
        assert!(matches!(
            parse_partial(bad.as_bytes(), InputFormat::Json),
            Err(Error::Schema { record: 0, .. })
        ));
    }

    #[test]
    fn parse_counterfactual_rows() {
        let ok = format!("{CF_HEADER}i1,a,first-m1,1,2,3,4\n");
        let recs = parse_counterfactual(ok.as_bytes(), InputFormat::Csv).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].order, Order::FirstM1);

        let bad = format!("{CF_HEADER}i1,a,first-m3,1,2,3,4\n");
        assert!(matches!(
            parse_counterfactual(bad.as_bytes(), InputFormat::Csv),
            Err(Error::Schema { message, .. }) if message.contains("first-m3")
        ));

        assert!(parse_counterfactual("".as_bytes(), InputFormat::Csv)
            .unwrap()
            .is_empty());
        assert!(parse_counterfactual(CF_HEADER.as_bytes(), InputFormat::Csv)
            .unwrap()
            .is_empty());
        assert!(parse_counterfactual("[]".as_bytes(), InputFormat::Json)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn parse_decomposition_rows() {
        let ok = format!("{DEC_HEADER}i1,a,0,0,0,5,5,5,5,4\n");
        let recs = parse_decomposition(ok.as_bytes(), InputFormat::Csv).unwrap();
        assert_eq!(recs[0].s.get(), 5);
        assert_eq!(recs[0].conf_s.get(), 4);

        let neg = format!("{DEC_HEADER}i1,a,-1,0,0,5,5,5,5,4\n");
        assert!(matches!(
            parse_decomposition(neg.as_bytes(), InputFormat::Csv),
            Err(Error::RatingRange {
                field: "r",
                value: -1,
                ..
            })
        ));

        let dup = format!("{DEC_HEADER}i1,a,0,0,0,5,5,5,5,4\ni1,a,1,1,1,1,1,1,1,1\n");
        assert!(matches!(
            parse_decomposition(dup.as_bytes(), InputFormat::Csv),
            Err(Error::Duplicate(_))
        ));
    }

    fn rec(item: &str, who: &str, c: Condition, label: &str) -> PartialRecord {
        PartialRecord {
            item_id: item.into(),
            annotator_id: who.into(),
            condition: c,
            label: RawLabel::Text(label.into()),
            confidence: Score(3),
        }
    }

    #[test]
    fn rotation_follows_annotator_cycle() {
        // each annotator labels every condition; labels encode who said what
        let space = LabelSpace::nominal(&["A", "B", "C"]).unwrap();
        let mut recs = Vec::new();
        for who in ["C", "A", "B"] {
            for c in Condition::ALL {
                recs.push(rec("i1", who, c, who));
            }
        }
        let d = triples_from_partial(&recs, &space, Pairing::Rotation).unwrap();
        let got: Vec<_> = d
            .samples()
            .iter()
            .map(|t| (t.y1.0, t.y2.0, t.y.0, t.weight))
            .collect();
        // (A.y1, B.y2, C.y), (B.y1, C.y2, A.y), (C.y1, A.y2, B.y)
        assert_eq!(got, vec![(0, 1, 2, 1.0), (1, 2, 0, 1.0), (2, 0, 1, 1.0)]);
    }

    #[test]
    fn single_annotator_per_condition() {
        let recs = vec![
            rec("i1", "a", Condition::M1, "0"),
            rec("i1", "b", Condition::M2, "1"),
            rec("i1", "c", Condition::Both, "1"),
        ];
        for pairing in [Pairing::Rotation, Pairing::AllPairs] {
            let d = triples_from_partial(&recs, &binary(), pairing).unwrap();
            assert_eq!(d.samples().len(), 1);
            assert_eq!(d.total_weight(), 1.0);
        }
    }

    #[test]
    fn all_pairs_weights() {
        let mut recs = Vec::new();
        for who in ["a", "b"] {
            for c in Condition::ALL {
                recs.push(rec("i1", who, c, "1"));
            }
        }
        let d = triples_from_partial(&recs, &binary(), Pairing::AllPairs).unwrap();
        assert_eq!(d.samples().len(), 8);
        assert!((d.total_weight() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_condition_is_error() {
        let recs = vec![
            rec("i1", "a", Condition::M1, "0"),
            rec("i1", "b", Condition::M1, "1"),
        ];
        assert!(matches!(
            triples_from_partial(&recs, &binary(), Pairing::Rotation),
            Err(Error::MissingCondition { .. })
        ));
        let recs = vec![
            rec("i1", "a", Condition::M1, "0"),
            rec("i1", "b", Condition::M2, "7"),
            rec("i1", "c", Condition::Both, "1"),
        ];
        assert!(matches!(
            triples_from_partial(&recs, &binary(), Pairing::Rotation),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn qa_partial_compares_with_multimodal_answer() {
        let recs = vec![
            rec("i1", "a", Condition::M1, "Red"),
            rec("i1", "b", Condition::M2, "blue"),
            rec("i1", "c", Condition::Both, "red"),
        ];
        let d = triples_from_partial(&recs, &LabelSpace::qa_binary(), Pairing::Rotation).unwrap();
        let t = d.samples()[0];
        assert_eq!(
            (t.y1, t.y2, t.y),
            (SAME, crate::label_space::DIFFERENT, SAME)
        );
    }

    fn cf(item: &str, who: &str, order: Order, first: &str, both: &str) -> CounterfactualRecord {
        CounterfactualRecord {
            item_id: item.into(),
            annotator_id: who.into(),
            order,
            label_first: RawLabel::Text(first.into()),
            label_both: RawLabel::Text(both.into()),
            confidence_first: Score(2),
            confidence_both: Score(4),
        }
    }

    #[test]
    fn counterfactual_ordinal_average() {
        let space = LabelSpace::ordinal_range(-3, 3).unwrap();
        let same = vec![
            cf("i", "a", Order::FirstM1, "1", "+2"),
            cf("i", "b", Order::FirstM2, "0", "2"),
        ];
        let d = triples_from_counterfactual(&same, &space).unwrap();
        assert_eq!(d.samples().len(), 1);
        assert_eq!(space.decode(d.samples()[0].y), Some("2"));
        assert_eq!(d.samples()[0].y1, LabelIndex(4));
        assert_eq!(d.samples()[0].y2, LabelIndex(3));

        // indices 5 and 4 average to 4.5, above the midpoint 3, so round up
        let split = vec![
            cf("i", "a", Order::FirstM1, "1", "2"),
            cf("i", "b", Order::FirstM2, "0", "1"),
        ];
        let d = triples_from_counterfactual(&split, &space).unwrap();
        assert_eq!(d.samples()[0].y, LabelIndex(5));
        assert_eq!(d.total_weight(), 1.0);
    }

    #[test]
    fn ordinal_average_rounding() {
        // size 7, midpoint 3
        assert_eq!(
            ordinal_average(LabelIndex(5), LabelIndex(4), 7),
            LabelIndex(5)
        );
        assert_eq!(
            ordinal_average(LabelIndex(1), LabelIndex(2), 7),
            LabelIndex(1)
        );
        assert_eq!(
            ordinal_average(LabelIndex(3), LabelIndex(3), 7),
            LabelIndex(3)
        );
        // size 4, midpoint 1.5: 1.5 itself rounds up
        assert_eq!(
            ordinal_average(LabelIndex(1), LabelIndex(2), 4),
            LabelIndex(2)
        );
        assert_eq!(
            ordinal_average(LabelIndex(0), LabelIndex(1), 4),
            LabelIndex(0)
        );
        assert_eq!(
            ordinal_average(LabelIndex(2), LabelIndex(3), 4),
            LabelIndex(3)
        );
    }

    #[test]
    fn counterfactual_nominal_split() {
        let space = LabelSpace::nominal(&["no", "yes"]).unwrap();
        let recs = vec![
            cf("i", "a", Order::FirstM1, "no", "yes"),
            cf("i", "b", Order::FirstM2, "no", "no"),
        ];
        let d = triples_from_counterfactual(&recs, &space).unwrap();
        let got: Vec<_> = d.samples().iter().map(|t| (t.y.0, t.weight)).collect();
        assert_eq!(got, vec![(1, 0.5), (0, 0.5)]);
    }

    #[test]
    fn counterfactual_missing_order() {
        let space = binary();
        let recs = vec![cf("i", "a", Order::FirstM1, "0", "1")];
        assert!(matches!(
            triples_from_counterfactual(&recs, &space),
            Err(Error::MissingCondition { .. })
        ));
    }

    #[test]
    fn counterfactual_item_weight_is_one() {
        let space = binary();
        let recs = vec![
            cf("i", "a", Order::FirstM1, "0", "1"),
            cf("i", "b", Order::FirstM1, "1", "1"),
            cf("i", "c", Order::FirstM2, "0", "0"),
            cf("j", "a", Order::FirstM1, "0", "1"),
            cf("j", "c", Order::FirstM2, "0", "0"),
        ];
        let d = triples_from_counterfactual(&recs, &space).unwrap();
        assert!((d.total_weight() - 2.0).abs() < 1e-12);
    }

    fn dec(v: [u8; 8]) -> DecompositionRecord {
        DecompositionRecord {
            item_id: "i".into(),
            annotator_id: "a".into(),
            r: Score(v[0]),
            u1: Score(v[1]),
            u2: Score(v[2]),
            s: Score(v[3]),
            conf_r: Score(v[4]),
            conf_u1: Score(v[5]),
            conf_u2: Score(v[6]),
            conf_s: Score(v[7]),
        }
    }

    #[test]
    fn summaries() {
        let s = summarize_decomposition(&[dec([1, 2, 3, 4, 5, 5, 5, 5])]).unwrap();
        assert_eq!((s.r, s.u1, s.u2, s.s), (1.0, 2.0, 3.0, 4.0));
        let s = summarize_decomposition(&[dec([0; 8]), dec([5; 8])]).unwrap();
        assert_eq!((s.r, s.u1, s.u2, s.s, s.conf_s), (2.5, 2.5, 2.5, 2.5, 2.5));
        let vqa: Vec<_> = (0..5).map(|_| dec([0, 0, 0, 5, 5, 5, 5, 5])).collect();
        let s = summarize_decomposition(&vqa).unwrap();
        assert_eq!((s.r, s.u1, s.u2, s.s), (0.0, 0.0, 0.0, 5.0));
        assert!(matches!(summarize_decomposition(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn rotation_weight_counts_items() {
        let mut recs = Vec::new();
        for item in ["i1", "i2", "i3"] {
            for who in ["a", "b", "c"] {
                for c in Condition::ALL {
                    recs.push(rec(item, who, c, "1"));
                }
            }
        }
        let d = triples_from_partial(&recs, &binary(), Pairing::Rotation).unwrap();
        assert_eq!(d.total_weight(), 9.0);
    }

    #[test]
    fn triples_csv_round_trip() {
        let d = TripleDataset::new(
            binary(),
            vec![Triple {
                y1: LabelIndex(0),
                y2: LabelIndex(1),
                y: LabelIndex(1),
                weight: 0.5,
            }],
        )
        .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "y1,y2,y,weight\n0,1,1,0.5\n"
        );
        assert_eq!(
            TripleDataset::read_csv(buf.as_slice(), binary()).unwrap(),
            d
        );
    }

    fn arb_label() -> impl Strategy<Value = RawLabel> {
        prop_oneof![
            "[a-z+-][a-z0-9 ]{0,5}[a-z]".prop_map(RawLabel::Text),
            (-50i32..50).prop_map(|v| RawLabel::Number(f64::from(v) / 4.0)),
        ]
    }

    fn arb_partial() -> impl Strategy<Value = Vec<PartialRecord>> {
        proptest::collection::vec(
            (
                "[a-z0-9]{1,4}",
                "[a-z]{1,3}",
                prop_oneof![
                    Just(Condition::M1),
                    Just(Condition::M2),
                    Just(Condition::Both)
                ],
                arb_label(),
                0u8..=5,
            ),
            0..20,
        )
        .prop_map(|rows| {
            let mut seen = HashSet::new();
            rows.into_iter()
                .filter(|(i, a, c, _, _)| seen.insert((i.clone(), a.clone(), *c)))
                .map(
                    |(item_id, annotator_id, condition, label, conf)| PartialRecord {
                        item_id,
                        annotator_id,
                        condition,
                        label,
                        confidence: Score(conf),
                    },
                )
                .collect()
        })
    }

    proptest! {
        #[test]
        fn partial_json_round_trip(recs in arb_partial()) {
            let mut buf = Vec::new();
            write_partial(&recs, &mut buf, InputFormat::Json).unwrap();
            let back = parse_partial(buf.as_slice(), InputFormat::Json).unwrap();
            prop_assert_eq!(back, recs);
        }

        #[test]
        fn partial_csv_round_trip(recs in arb_partial()) {
            // CSV carries labels as text
            let recs: Vec<_> = recs
                .into_iter()
                .map(|mut r| {
                    r.label = RawLabel::Text(r.label.to_string());
                    r
                })
                .collect();
            let mut buf = Vec::new();
            write_partial(&recs, &mut buf, InputFormat::Csv).unwrap();
            let back = parse_partial(buf.as_slice(), InputFormat::Csv).unwrap();
            prop_assert_eq!(back, recs);
        }
    }
}
