//! Filters, attribute aggregation, anchor alignment, and sequence payloads.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{
    format_timestamp, parse_timestamp, AttrLevel, AttrType, AttrValue, EventId, EventLog,
    IndividualRecord, UniqueSequenceSet,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown event type `{0}`")]
    UnknownEventType(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("anchor list must hold 1 or 2 event types, found {0}")]
    InvalidAnchors(usize),
    #[error("attribute `{0}` is recorded per event and cannot be charted per record")]
    EventLevelAttribute(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Attribute,
    Frequency,
    DateRange,
    EventOccurrence,
    DayOfWeek,
    Month,
    Year,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=", alias = "≠")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=", alias = "≤")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=", alias = "≥")]
    Ge,
    #[serde(rename = "in")]
    In,
    #[serde(rename = "contains")]
    Contains,
}

impl Operator {
    fn is_ordering(self) -> bool {
        matches!(self, Operator::Lt | Operator::Le | Operator::Gt | Operator::Ge)
    }
}

#[derive(Debug, Clone, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FilterValue {
    Number(f64),
    Text(String),
    List(Vec<FilterValue>),
}

/// `attribute op value`.
///
/// * `attribute`: record attribute, or event attribute (any event matches).
/// * `frequency`: frequency of the record's unique sequence.
/// * `date_range`: start time of the record; `in` takes `[from, to]`.
/// * `event_occurrence`: `= A` keeps records containing A at least once,
///   `!= A` those without A, `in [A, B]` those containing any of them.
/// * `day_of_week` (1 = Monday), `month` (1-12), `year`: of the record's
///   start time in UTC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub kind: FilterKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    pub op: Operator,
    pub value: FilterValue,
}

impl Filter {
    pub fn event_occurs(event_type: &str) -> Self {
        Filter {
            kind: FilterKind::EventOccurrence,
            attribute: None,
            op: Operator::Eq,
            value: FilterValue::Text(event_type.to_owned()),
        }
    }

    pub fn attribute(name: &str, op: Operator, value: FilterValue) -> Self {
        Filter {
            kind: FilterKind::Attribute,
            attribute: Some(name.to_owned()),
            op,
            value,
        }
    }
}

/// Canonical signature of a filter list: SHA-256 over the JSON array of the
/// filters' canonical JSON encodings, sorted.
pub fn filter_signature(filters: &[Filter]) -> String {
    let mut encoded: Vec<String> = filters
        .iter()
        .map(|f| serde_json::to_string(f).expect("filters serialize"))
        .collect();
    encoded.sort();
    encoded.dedup();
    let canonical = format!("[{}]", encoded.join(","));
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Predicate over one record, resolved against a log's schema.
enum Compiled {
    Numeric {
        source: NumericSource,
        op: Operator,
        values: Vec<f64>,
    },
    Text {
        attribute: String,
        level: AttrLevel,
        op: Operator,
        values: Vec<String>,
    },
    Occurs {
        negate: bool,
        any_of: Vec<Option<EventId>>,
    },
}

enum NumericSource {
    Attribute(String, AttrLevel),
    Frequency,
    Start,
    DayOfWeek,
    Month,
    Year,
}

fn numbers(value: &FilterValue, dates: bool) -> Result<Vec<f64>, AnalyticsError> {
    let one = |v: &FilterValue| -> Result<f64, AnalyticsError> {
        match v {
            FilterValue::Number(x) => Ok(*x),
            FilterValue::Text(s) if dates => parse_timestamp(s)
                .map(|ms| ms as f64)
                .ok_or_else(|| AnalyticsError::TypeMismatch(format!("`{s}` is not a date"))),
            FilterValue::Text(s) => s
                .parse()
                .map_err(|_| AnalyticsError::TypeMismatch(format!("`{s}` is not a number"))),
            FilterValue::List(_) => Err(AnalyticsError::TypeMismatch("nested list".into())),
        }
    };
    match value {
        FilterValue::List(items) => items.iter().map(one).collect(),
        v => Ok(vec![one(v)?]),
    }
}

fn texts(value: &FilterValue) -> Result<Vec<String>, AnalyticsError> {
    let one = |v: &FilterValue| match v {
        FilterValue::Text(s) => Ok(s.clone()),
        FilterValue::Number(x) => Ok(x.to_string()),
        FilterValue::List(_) => Err(AnalyticsError::TypeMismatch("nested list".into())),
    };
    match value {
        FilterValue::List(items) => items.iter().map(one).collect(),
        v => Ok(vec![one(v)?]),
    }
}

const WEEKDAYS: [&str; 7] = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];
const MONTHS: [&str; 12] = [
    "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec",
];

fn calendar_numbers(value: &FilterValue, names: &[&str]) -> Result<Vec<f64>, AnalyticsError> {
    let one = |v: &FilterValue| match v {
        FilterValue::Number(x) => Ok(*x),
        FilterValue::Text(s) => {
            let lower = s.to_ascii_lowercase();
            names
                .iter()
                .position(|n| lower.starts_with(n))
                .map(|i| (i + 1) as f64)
                .or_else(|| s.parse().ok())
                .ok_or_else(|| AnalyticsError::TypeMismatch(format!("`{s}` is not recognised")))
        }
        FilterValue::List(_) => Err(AnalyticsError::TypeMismatch("nested list".into())),
    };
    match value {
        FilterValue::List(items) => items.iter().map(one).collect(),
        v => Ok(vec![one(v)?]),
    }
}

fn check_numeric_op(op: Operator, values: &[f64]) -> Result<(), AnalyticsError> {
    match op {
        Operator::Contains => Err(AnalyticsError::TypeMismatch(
            "`contains` applies to categorical attributes only".into(),
        )),
        Operator::In if values.is_empty() => {
            Err(AnalyticsError::TypeMismatch("`in` needs a value list".into()))
        }
        Operator::In => Ok(()),
        _ if values.len() != 1 => Err(AnalyticsError::TypeMismatch(
            "operator takes a single value".into(),
        )),
        _ => Ok(()),
    }
}

fn compile(filter: &Filter, log: &EventLog) -> Result<Compiled, AnalyticsError> {
    let numeric = |source: NumericSource, values: Vec<f64>| {
        check_numeric_op(filter.op, &values)?;
        Ok(Compiled::Numeric {
            source,
            op: filter.op,
            values,
        })
    };
    match filter.kind {
        FilterKind::Attribute => {
            let name = filter
                .attribute
                .as_deref()
                .ok_or_else(|| AnalyticsError::UnknownAttribute(String::new()))?;
            let info = log
                .attribute_schema
                .get(name)
                .ok_or_else(|| AnalyticsError::UnknownAttribute(name.to_owned()))?;
            match info.kind {
                AttrType::Numeric => numeric(
                    NumericSource::Attribute(name.to_owned(), info.level),
                    numbers(&filter.value, false)?,
                ),
                AttrType::Date => numeric(
                    NumericSource::Attribute(name.to_owned(), info.level),
                    numbers(&filter.value, true)?,
                ),
                AttrType::Categorical => {
                    if filter.op.is_ordering() {
                        return Err(AnalyticsError::TypeMismatch(format!(
                            "`{name}` is categorical and has no ordering"
                        )));
                    }
                    let values = texts(&filter.value)?;
                    if filter.op != Operator::In && values.len() != 1 {
                        return Err(AnalyticsError::TypeMismatch(
                            "operator takes a single value".into(),
                        ));
                    }
                    Ok(Compiled::Text {
                        attribute: name.to_owned(),
                        level: info.level,
                        op: filter.op,
                        values,
                    })
                }
            }
        }
        FilterKind::Frequency => numeric(NumericSource::Frequency, numbers(&filter.value, false)?),
        FilterKind::DateRange => {
            let values = numbers(&filter.value, true)?;
            if filter.op == Operator::In && values.len() != 2 {
                return Err(AnalyticsError::TypeMismatch(
                    "date_range `in` takes [from, to]".into(),
                ));
            }
            numeric(NumericSource::Start, values)
        }
        FilterKind::DayOfWeek => numeric(
            NumericSource::DayOfWeek,
            calendar_numbers(&filter.value, &WEEKDAYS)?,
        ),
        FilterKind::Month => numeric(NumericSource::Month, calendar_numbers(&filter.value, &MONTHS)?),
        FilterKind::Year => numeric(NumericSource::Year, numbers(&filter.value, false)?),
        FilterKind::EventOccurrence => {
            let names = texts(&filter.value)?;
            let negate = match filter.op {
                Operator::Eq | Operator::In => false,
                Operator::Ne => true,
                _ => {
                    return Err(AnalyticsError::TypeMismatch(
                        "event_occurrence supports =, != and in".into(),
                    ))
                }
            };
            if filter.op != Operator::In && names.len() != 1 {
                return Err(AnalyticsError::TypeMismatch(
                    "operator takes a single value".into(),
                ));
            }
            let any_of = names
                .iter()
                .map(|n| match log.alphabet.id(n) {
                    Some(id) => Ok(Some(id)),
                    None if log.alphabet.is_empty() => Ok(None),
                    None => Err(AnalyticsError::UnknownEventType(n.clone())),
                })
                .collect::<Result<_, _>>()?;
            Ok(Compiled::Occurs { negate, any_of })
        }
    }
}

fn compare(op: Operator, x: f64, values: &[f64]) -> bool {
    match op {
        Operator::Eq => x == values[0],
        Operator::Ne => x != values[0],
        Operator::Lt => x < values[0],
        Operator::Le => x <= values[0],
        Operator::Gt => x > values[0],
        Operator::Ge => x >= values[0],
        Operator::In => values.contains(&x),
        Operator::Contains => false,
    }
}

fn compare_text(op: Operator, x: &str, values: &[String]) -> bool {
    match op {
        Operator::Eq => x == values[0],
        Operator::Ne => x != values[0],
        Operator::In => values.iter().any(|v| v == x),
        Operator::Contains => x.contains(values[0].as_str()),
        _ => false,
    }
}

fn utc(ms: i64) -> DateTime<Utc> {
    DateTime::<Utc>::from_timestamp_millis(ms).unwrap_or_default()
}

impl Compiled {
    fn matches(&self, record: &IndividualRecord, frequency: &HashMap<Vec<EventId>, u64>) -> bool {
        match self {
            Compiled::Numeric { source, op, values } => {
                // date_range `in` is an inclusive interval
                let test = |x: f64| match (source, op) {
                    (NumericSource::Start, Operator::In) => x >= values[0] && x <= values[1],
                    _ => compare(*op, x, values),
                };
                match source {
                    NumericSource::Attribute(name, AttrLevel::Record) => record
                        .attributes
                        .get(name)
                        .and_then(AttrValue::as_number)
                        .is_some_and(test),
                    NumericSource::Attribute(name, AttrLevel::Event) => record.events.iter().any(|e| {
                        e.attributes
                            .get(name)
                            .and_then(AttrValue::as_number)
                            .is_some_and(test)
                    }),
                    NumericSource::Frequency => {
                        test(frequency.get(&record.sequence()).copied().unwrap_or(0) as f64)
                    }
                    NumericSource::Start => test(record.start() as f64),
                    NumericSource::DayOfWeek => {
                        test(f64::from(utc(record.start()).weekday().number_from_monday()))
                    }
                    NumericSource::Month => test(f64::from(utc(record.start()).month())),
                    NumericSource::Year => test(f64::from(utc(record.start()).year())),
                }
            }
            Compiled::Text {
                attribute,
                level,
                op,
                values,
            } => {
                let test = |v: &AttrValue| compare_text(*op, &v.to_string(), values);
                match level {
                    AttrLevel::Record => record.attributes.get(attribute).is_some_and(test),
                    AttrLevel::Event => record
                        .events
                        .iter()
                        .any(|e| e.attributes.get(attribute).is_some_and(test)),
                }
            }
            Compiled::Occurs { negate, any_of } => {
                let found = any_of
                    .iter()
                    .flatten()
                    .any(|&id| record.contains(id));
                found != *negate
            }
        }
    }
}

/// Records satisfying every filter. The result may be empty.
pub fn apply_filters(log: &EventLog, filters: &[Filter]) -> Result<EventLog, AnalyticsError> {
    if filters.is_empty() {
        return Ok(log.clone());
    }
    let compiled = filters
        .iter()
        .map(|f| compile(f, log))
        .collect::<Result<Vec<_>, _>>()?;
    let needs_frequency = filters.iter().any(|f| f.kind == FilterKind::Frequency);
    let mut frequency: HashMap<Vec<EventId>, u64> = HashMap::new();
    if needs_frequency {
        for r in &log.records {
            *frequency.entry(r.sequence()).or_default() += 1;
        }
    }
    Ok(log.retain(|r| compiled.iter().all(|c| c.matches(r, &frequency))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartType {
    SelectedData,
    Sequence,
    Cluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub id: String,
    pub counts: Vec<u64>,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedBarData {
    pub attribute: String,
    pub chart_type: ChartType,
    pub bins: Vec<String>,
    pub series: Vec<Series>,
}

/// Numeric binning rule.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "width")]
pub enum BinRule {
    /// `2 * IQR / n^(1/3)`, falling back to a tenth of the range.
    #[default]
    FreedmanDiaconis,
    Fixed(f64),
}

pub const MISSING_BIN: &str = "(missing)";

/// Named groups of record ids to chart against each other.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartScope {
    pub chart_type: ChartType,
    pub series: Vec<(String, Vec<String>)>,
}

impl ChartScope {
    /// Selected records against the rest of the log.
    pub fn selected_data(log: &EventLog, selected: &HashSet<String>) -> Self {
        let (inside, outside): (Vec<_>, Vec<_>) = log
            .records
            .iter()
            .map(|r| r.record_id.clone())
            .partition(|id| selected.contains(id));
        ChartScope {
            chart_type: ChartType::SelectedData,
            series: vec![("selected".into(), inside), ("rest".into(), outside)],
        }
    }

    /// One series per unique sequence, labelled `S<n>`.
    pub fn sequences(set: &UniqueSequenceSet, indices: &[usize]) -> Result<Self, AnalyticsError> {
        let series = indices
            .iter()
            .map(|&i| {
                set.get(i)
                    .map(|s| (UniqueSequenceSet::label(i), s.member_record_ids.clone()))
                    .ok_or_else(|| AnalyticsError::UnknownId(UniqueSequenceSet::label(i)))
            })
            .collect::<Result<_, _>>()?;
        Ok(ChartScope {
            chart_type: ChartType::Sequence,
            series,
        })
    }

    /// One series per cluster; each cluster is a list of unique-sequence
    /// indices.
    pub fn clusters(
        set: &UniqueSequenceSet,
        clusters: &[(String, Vec<usize>)],
    ) -> Result<Self, AnalyticsError> {
        let series = clusters
            .iter()
            .map(|(name, members)| {
                let mut ids = Vec::new();
                for &m in members {
                    let s = set
                        .get(m)
                        .ok_or_else(|| AnalyticsError::UnknownId(UniqueSequenceSet::label(m)))?;
                    ids.extend(s.member_record_ids.iter().cloned());
                }
                Ok((name.clone(), ids))
            })
            .collect::<Result<_, AnalyticsError>>()?;
        Ok(ChartScope {
            chart_type: ChartType::Cluster,
            series,
        })
    }
}

fn format_edge(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:.4}")
    }
}

fn auto_width(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let quantile = |p: f64| {
        let pos = p * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let width = 2.0 * iqr / (n as f64).cbrt();
    if width > 0.0 {
        return width;
    }
    let range = sorted[n - 1] - sorted[0];
    if range > 0.0 {
        range / 10.0
    } else {
        1.0
    }
}

/// Stacked-bar counts of a record attribute for each series of `scope`.
///
/// Categorical attributes bin by distinct value (sorted); numeric ones use
/// fixed-width bins `[lo + i*w, lo + (i+1)*w)` with `lo = floor(min/w)*w`;
/// dates bin by calendar month. Records lacking the attribute land in
/// [`MISSING_BIN`].
pub fn attribute_aggregate(
    log: &EventLog,
    scope: &ChartScope,
    attribute: &str,
    rule: BinRule,
) -> Result<StackedBarData, AnalyticsError> {
    let info = log
        .attribute_schema
        .get(attribute)
        .ok_or_else(|| AnalyticsError::UnknownAttribute(attribute.to_owned()))?;
    if info.level == AttrLevel::Event {
        return Err(AnalyticsError::EventLevelAttribute(attribute.to_owned()));
    }
    let by_id: HashMap<&str, &IndividualRecord> = log
        .records
        .iter()
        .map(|r| (r.record_id.as_str(), r))
        .collect();
    let mut resolved: Vec<Vec<&IndividualRecord>> = Vec::with_capacity(scope.series.len());
    for (_, ids) in &scope.series {
        resolved.push(
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| AnalyticsError::UnknownId(id.clone()))
                })
                .collect::<Result<_, _>>()?,
        );
    }

    let value_of = |r: &IndividualRecord| r.attributes.get(attribute).cloned();
    let (bins, bin_of): (Vec<String>, Box<dyn Fn(&Option<AttrValue>) -> usize>) = match info.kind {
        AttrType::Numeric => {
            let observed: Vec<f64> = resolved
                .iter()
                .flatten()
                .filter_map(|r| value_of(r).and_then(|v| v.as_number()))
                .collect();
            let has_missing = resolved
                .iter()
                .flatten()
                .any(|r| value_of(r).and_then(|v| v.as_number()).is_none());
            if observed.is_empty() {
                (vec![MISSING_BIN.to_owned()], Box::new(|_| 0))
            } else {
                let width = match rule {
                    BinRule::Fixed(w) if w > 0.0 => w,
                    BinRule::Fixed(_) => {
                        return Err(AnalyticsError::TypeMismatch("bin width must be positive".into()))
                    }
                    BinRule::FreedmanDiaconis => auto_width(&observed),
                };
                let min = observed.iter().copied().fold(f64::INFINITY, f64::min);
                let max = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = (min / width).floor() * width;
                let count = (((max - lo) / width).floor() as usize) + 1;
                let mut bins: Vec<String> = (0..count)
                    .map(|i| {
                        let a = lo + i as f64 * width;
                        format!("[{}, {})", format_edge(a), format_edge(a + width))
                    })
                    .collect();
                if has_missing {
                    bins.push(MISSING_BIN.to_owned());
                }
                let missing = count;
                (
                    bins,
                    Box::new(move |v: &Option<AttrValue>| match v.as_ref().and_then(|v| v.as_number()) {
                        Some(x) => (((x - lo) / width).floor() as usize).min(count - 1),
                        None => missing,
                    }),
                )
            }
        }
        AttrType::Categorical | AttrType::Date => {
            let label = move |v: &Option<AttrValue>| -> String {
                match v {
                    None => MISSING_BIN.to_owned(),
                    Some(AttrValue::Date(ms)) => {
                        let dt = utc(*ms);
                        format!("{:04}-{:02}", dt.year(), dt.month())
                    }
                    Some(other) => other.to_string(),
                }
            };
            let labels: BTreeSet<String> = resolved
                .iter()
                .flatten()
                .map(|r| label(&value_of(r)))
                .collect();
            let bins: Vec<String> = labels.into_iter().collect();
            let index: HashMap<String, usize> =
                bins.iter().enumerate().map(|(i, b)| (b.clone(), i)).collect();
            (bins, Box::new(move |v| index[&label(v)]))
        }
    };

    let series = scope
        .series
        .iter()
        .zip(&resolved)
        .map(|((id, _), records)| {
            let mut counts = vec![0u64; bins.len()];
            for r in records {
                counts[bin_of(&value_of(r))] += 1;
            }
            Series {
                id: id.clone(),
                total: records.len() as u64,
                counts,
            }
        })
        .collect();

    Ok(StackedBarData {
        attribute: attribute.to_owned(),
        chart_type: scope.chart_type,
        bins,
        series,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorOffset {
    /// Leading columns to shift the sequence right by.
    pub offset: usize,
    pub anchored: bool,
    /// With two anchors: events strictly between the first anchor and the
    /// next occurrence of the second anchor after it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment_len: Option<usize>,
}

/// Offsets that place the first occurrence of `anchors[0]` in a shared
/// column. Sequences without it keep offset 0 and are flagged unanchored.
pub fn align_by_event(
    sequences: &[Vec<EventId>],
    anchors: &[EventId],
) -> Result<Vec<AnchorOffset>, AnalyticsError> {
    if anchors.is_empty() || anchors.len() > 2 {
        return Err(AnalyticsError::InvalidAnchors(anchors.len()));
    }
    let first = anchors[0];
    let positions: Vec<Option<usize>> = sequences
        .iter()
        .map(|s| s.iter().position(|&e| e == first))
        .collect();
    let column = positions.iter().flatten().copied().max().unwrap_or(0);
    Ok(sequences
        .iter()
        .zip(&positions)
        .map(|(seq, pos)| match pos {
            Some(p) => AnchorOffset {
                offset: column - p,
                anchored: true,
                segment_len: anchors.get(1).and_then(|&second| {
                    seq[p + 1..].iter().position(|&e| e == second)
                }),
            },
            None => AnchorOffset {
                offset: 0,
                anchored: false,
                segment_len: None,
            },
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceSort {
    Frequency,
    /// Row order of the cluster's alignment.
    #[default]
    Similarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniqueSequencePayload {
    pub index: usize,
    pub label: String,
    pub events: Vec<EventId>,
    pub frequency: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor: Option<AnchorOffset>,
}

/// Unique sequences in the given order (alignment row order for
/// similarity), or re-sorted by descending frequency.
pub fn unique_sequences(
    set: &UniqueSequenceSet,
    indices_in_similarity_order: &[usize],
    sort: SequenceSort,
) -> Result<Vec<UniqueSequencePayload>, AnalyticsError> {
    let mut out = indices_in_similarity_order
        .iter()
        .map(|&i| {
            let s = set
                .get(i)
                .ok_or_else(|| AnalyticsError::UnknownId(UniqueSequenceSet::label(i)))?;
            Ok(UniqueSequencePayload {
                index: i,
                label: UniqueSequenceSet::label(i),
                events: s.events.clone(),
                frequency: s.frequency,
                anchor: None,
            })
        })
        .collect::<Result<Vec<_>, AnalyticsError>>()?;
    if sort == SequenceSort::Frequency {
        out.sort_by(|a, b| b.frequency.cmp(&a.frequency).then(a.index.cmp(&b.index)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPayload {
    pub event_type: EventId,
    pub timestamp: String,
    pub timestamp_ms: i64,
    /// Time to the next event in the record, in milliseconds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<i64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, AttrValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordPayload {
    pub record_id: String,
    pub events: Vec<EventPayload>,
    pub attributes: BTreeMap<String, AttrValue>,
}

/// Individual records of one unique sequence, with per-event durations and
/// the requested attribute columns (all record attributes when `attrs` is
/// empty).
pub fn individual_records(
    log: &EventLog,
    set: &UniqueSequenceSet,
    index: usize,
    attrs: &[String],
) -> Result<Vec<RecordPayload>, AnalyticsError> {
    let unique = set
        .get(index)
        .ok_or_else(|| AnalyticsError::UnknownId(UniqueSequenceSet::label(index)))?;
    for a in attrs {
        if !log.attribute_schema.contains_key(a) {
            return Err(AnalyticsError::UnknownAttribute(a.clone()));
        }
    }
    let by_id: HashMap<&str, &IndividualRecord> = log
        .records
        .iter()
        .map(|r| (r.record_id.as_str(), r))
        .collect();
    unique
        .member_record_ids
        .iter()
        .map(|id| {
            let r = by_id
                .get(id.as_str())
                .ok_or_else(|| AnalyticsError::UnknownId(id.clone()))?;
            let keep = |k: &String| attrs.is_empty() || attrs.contains(k);
            let events = r
                .events
                .iter()
                .enumerate()
                .map(|(i, e)| EventPayload {
                    event_type: e.event_type,
                    timestamp: format_timestamp(e.timestamp),
                    timestamp_ms: e.timestamp,
                    duration_ms: r.events.get(i + 1).map(|n| n.timestamp - e.timestamp),
                    attributes: e
                        .attributes
                        .iter()
                        .filter(|(k, _)| keep(k))
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect(),
                })
                .collect();
            Ok(RecordPayload {
                record_id: r.record_id.clone(),
                events,
                attributes: r
                    .attributes
                    .iter()
                    .filter(|(k, _)| keep(k))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect(),
            })
        })
        .collect()
}
