//! Event-log ingestion.
//!
//! Two CSV inputs are accepted. The events file has one row per event:
//!
//! ```text
//! record_id,event_type,timestamp[,key=value ...]
//! ```
//!
//! and the optional attributes file has one row per record:
//!
//! ```text
//! record_id,<attr1>,<attr2>,...
//! ```
//!
//! Records are grouped by `record_id` (rows of one record may be interleaved
//! with other records), events are stably sorted by timestamp, and event
//! types are numbered densely in order of first appearance.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("dataset has no data rows")]
    EmptyDataset,
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("attribute row references unknown record `{0}`")]
    UnknownRecord(String),
    #[error("schema override names unknown attribute `{0}`")]
    UnknownSchemaAttribute(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Dense, 0-based event-type token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(pub u32);

impl EventId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bijective mapping between event-type names and ids.
///
/// The gap symbol is not part of the alphabet proper; its reserved id is
/// `len()`, one past the largest event id.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Alphabet {
    names: Vec<String>,
    index: HashMap<String, EventId>,
}

impl PartialEq for Alphabet {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
    }
}

impl Eq for Alphabet {}

impl From<Vec<String>> for Alphabet {
    fn from(names: Vec<String>) -> Self {
        Alphabet::from_names(names)
    }
}

impl From<Alphabet> for Vec<String> {
    fn from(a: Alphabet) -> Self {
        a.names
    }
}

impl Alphabet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut alphabet = Self::new();
        for name in names {
            alphabet.intern(&name.into());
        }
        alphabet
    }

    /// Returns the id for `name`, assigning the next free id on first sight.
    pub fn intern(&mut self, name: &str) -> EventId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = EventId(self.names.len() as u32);
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<EventId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: EventId) -> Option<&str> {
        self.names.get(id.index()).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Reserved id of the gap symbol in serialized alignments.
    pub fn gap_id(&self) -> u32 {
        self.names.len() as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrType {
    Categorical,
    Numeric,
    Date,
}

/// Whether an attribute lives on the record or on individual events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrLevel {
    Record,
    Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeInfo {
    #[serde(rename = "type")]
    pub kind: AttrType,
    pub level: AttrLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum AttrValue {
    Text(String),
    Number(f64),
    /// UTC milliseconds.
    Date(i64),
}

impl AttrValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            AttrValue::Number(x) => Some(*x),
            AttrValue::Date(ms) => Some(*ms as f64),
            AttrValue::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            AttrValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Text(s) => f.write_str(s),
            AttrValue::Number(x) => write!(f, "{x}"),
            AttrValue::Date(ms) => match DateTime::<Utc>::from_timestamp_millis(*ms) {
                Some(dt) => f.write_str(&dt.to_rfc3339_opts(SecondsFormat::Millis, true)),
                None => write!(f, "{ms}"),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub event_type: EventId,
    /// UTC milliseconds.
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, AttrValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualRecord {
    pub record_id: String,
    pub events: Vec<Event>,
    #[serde(default)]
    pub attributes: BTreeMap<String, AttrValue>,
}

impl IndividualRecord {
    pub fn sequence(&self) -> Vec<EventId> {
        self.events.iter().map(|e| e.event_type).collect()
    }

    pub fn start(&self) -> i64 {
        self.events.first().map_or(0, |e| e.timestamp)
    }

    pub fn contains(&self, event_type: EventId) -> bool {
        self.events.iter().any(|e| e.event_type == event_type)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub records: Vec<IndividualRecord>,
    pub alphabet: Alphabet,
    pub attribute_schema: BTreeMap<String, AttributeInfo>,
}

impl EventLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sub-log with the records for which `keep` holds; alphabet and schema
    /// are shared with the parent so ids stay comparable.
    pub fn retain<F: FnMut(&IndividualRecord) -> bool>(&self, mut keep: F) -> EventLog {
        EventLog {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            alphabet: self.alphabet.clone(),
            attribute_schema: self.attribute_schema.clone(),
        }
    }

    pub fn record(&self, record_id: &str) -> Option<&IndividualRecord> {
        self.records.iter().find(|r| r.record_id == record_id)
    }
}

/// A deduplicated event-type sequence and the records that share it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniqueSequence {
    pub events: Vec<EventId>,
    pub frequency: u64,
    pub member_record_ids: Vec<String>,
}

/// Unique sequences in canonical order: descending frequency, then
/// lexicographic by event-id list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniqueSequenceSet {
    pub sequences: Vec<UniqueSequence>,
}

impl UniqueSequenceSet {
    /// Builds a set directly from `(sequence, frequency)` pairs. Record ids
    /// are synthesized as `<index>#<n>`. Duplicate sequences are merged.
    pub fn from_frequencies<I>(items: I) -> Self
    where
        I: IntoIterator<Item = (Vec<EventId>, u64)>,
    {
        let mut merged: BTreeMap<Vec<EventId>, u64> = BTreeMap::new();
        for (seq, freq) in items {
            *merged.entry(seq).or_default() += freq;
        }
        let mut sequences: Vec<UniqueSequence> = merged
            .into_iter()
            .enumerate()
            .map(|(i, (events, frequency))| UniqueSequence {
                member_record_ids: (0..frequency).map(|n| format!("{i}#{n}")).collect(),
                events,
                frequency,
            })
            .collect();
        canonical_sort(&mut sequences);
        UniqueSequenceSet { sequences }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn total_records(&self) -> u64 {
        self.sequences.iter().map(|s| s.frequency).sum()
    }

    pub fn frequencies(&self) -> Vec<u64> {
        self.sequences.iter().map(|s| s.frequency).collect()
    }

    pub fn get(&self, index: usize) -> Option<&UniqueSequence> {
        self.sequences.get(index)
    }

    /// Display label of a unique sequence (`S1`, `S2`, ...).
    pub fn label(index: usize) -> String {
        format!("S{}", index + 1)
    }
}

fn canonical_sort(sequences: &mut [UniqueSequence]) {
    sequences.sort_by(|a, b| {
        b.frequency
            .cmp(&a.frequency)
            .then_with(|| a.events.cmp(&b.events))
    });
}

/// Groups records by identical event-type lists.
pub fn deduplicate(log: &EventLog) -> UniqueSequenceSet {
    let mut groups: HashMap<Vec<EventId>, Vec<String>> = HashMap::new();
    for record in &log.records {
        groups
            .entry(record.sequence())
            .or_default()
            .push(record.record_id.clone());
    }
    let mut sequences: Vec<UniqueSequence> = groups
        .into_iter()
        .map(|(events, member_record_ids)| UniqueSequence {
            frequency: member_record_ids.len() as u64,
            events,
            member_record_ids,
        })
        .collect();
    canonical_sort(&mut sequences);
    UniqueSequenceSet { sequences }
}

/// Parses an ISO-8601 timestamp into UTC milliseconds. Values without an
/// offset are taken as UTC; a bare date means midnight.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp_millis());
    }
    const NAIVE: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    for fmt in NAIVE {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc().timestamp_millis());
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp_millis())
}

pub fn format_timestamp(ms: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(ms)
        .map(|dt| dt.to_rfc3339_opts(SecondsFormat::Millis, true))
        .unwrap_or_else(|| ms.to_string())
}

fn infer_type<'a, I: IntoIterator<Item = &'a str>>(values: I) -> AttrType {
    let mut all_numeric = true;
    let mut all_dates = true;
    let mut any = false;
    for v in values {
        if v.is_empty() {
            continue;
        }
        any = true;
        all_numeric &= v.parse::<f64>().is_ok_and(f64::is_finite);
        all_dates &= parse_timestamp(v).is_some();
        if !all_numeric && !all_dates {
            break;
        }
    }
    match (any, all_numeric, all_dates) {
        (false, _, _) => AttrType::Categorical,
        (true, true, _) => AttrType::Numeric,
        (true, false, true) => AttrType::Date,
        _ => AttrType::Categorical,
    }
}

fn typed_value(raw: &str, kind: AttrType) -> Option<AttrValue> {
    if raw.is_empty() {
        return None;
    }
    Some(match kind {
        AttrType::Numeric => match raw.parse::<f64>() {
            Ok(x) => AttrValue::Number(x),
            Err(_) => AttrValue::Text(raw.to_owned()),
        },
        AttrType::Date => match parse_timestamp(raw) {
            Some(ms) => AttrValue::Date(ms),
            None => AttrValue::Text(raw.to_owned()),
        },
        AttrType::Categorical => AttrValue::Text(raw.to_owned()),
    })
}

/// Schema side-file: attribute name to forced type.
pub type SchemaOverrides = BTreeMap<String, AttrType>;

/// Parses a schema side-file. Accepts either JSON or TOML of the form
/// `{ "age": "numeric", "hospital": "categorical" }`.
pub fn parse_schema_overrides(text: &str) -> Result<SchemaOverrides, String> {
    serde_json::from_str(text)
        .or_else(|_| toml::from_str(text))
        .map_err(|e: toml::de::Error| e.to_string())
}

struct RawRecord {
    record_id: String,
    events: Vec<(EventId, i64, Vec<(String, String)>)>,
}

pub fn parse_event_log<R: Read, A: Read>(
    events: R,
    attributes: Option<A>,
) -> Result<EventLog, IngestError> {
    parse_event_log_with_schema(events, attributes, None)
}

pub fn parse_event_log_with_schema<R: Read, A: Read>(
    events: R,
    attributes: Option<A>,
    overrides: Option<&SchemaOverrides>,
) -> Result<EventLog, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(events);

    let mut alphabet = Alphabet::new();
    let mut raw: Vec<RawRecord> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();

    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() < 3 {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected at least 3 fields, found {}", row.len()),
            });
        }
        let record_id = &row[0];
        let event_type = &row[1];
        if record_id.is_empty() || event_type.is_empty() {
            return Err(IngestError::MalformedRow {
                line,
                reason: "empty record_id or event_type".into(),
            });
        }
        let timestamp = parse_timestamp(&row[2]).ok_or_else(|| IngestError::MalformedRow {
            line,
            reason: format!("unparseable timestamp `{}`", &row[2]),
        })?;
        let mut event_attrs = Vec::new();
        for field in row.iter().skip(3) {
            if field.is_empty() {
                continue;
            }
            let (k, v) = field.split_once('=').ok_or_else(|| IngestError::MalformedRow {
                line,
                reason: format!("event attribute `{field}` is not key=value"),
            })?;
            event_attrs.push((k.trim().to_owned(), v.trim().to_owned()));
        }
        let id = alphabet.intern(event_type);
        let slot = *by_id.entry(record_id.to_owned()).or_insert_with(|| {
            raw.push(RawRecord {
                record_id: record_id.to_owned(),
                events: Vec::new(),
            });
            raw.len() - 1
        });
        raw[slot].events.push((id, timestamp, event_attrs));
    }

    if raw.is_empty() {
        return Err(IngestError::EmptyDataset);
    }

    let record_attrs = match attributes {
        Some(a) => read_attribute_file(a, &by_id)?,
        None => Vec::new(),
    };

    let mut schema: BTreeMap<String, AttributeInfo> = BTreeMap::new();

    // record-level attribute types
    let mut record_values: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (_, attrs) in &record_attrs {
        for (k, v) in attrs {
            record_values.entry(k.as_str()).or_default().push(v.as_str());
        }
    }
    for (k, values) in &record_values {
        let kind = overrides
            .and_then(|o| o.get(*k).copied())
            .unwrap_or_else(|| infer_type(values.iter().copied()));
        schema.insert(
            (*k).to_owned(),
            AttributeInfo {
                kind,
                level: AttrLevel::Record,
            },
        );
    }

    let mut event_values: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in &raw {
        for (_, _, attrs) in &r.events {
            for (k, v) in attrs {
                event_values.entry(k.as_str()).or_default().push(v.as_str());
            }
        }
    }
    for (k, values) in &event_values {
        if schema.contains_key(*k) {
            continue;
        }
        let kind = overrides
            .and_then(|o| o.get(*k).copied())
            .unwrap_or_else(|| infer_type(values.iter().copied()));
        schema.insert(
            (*k).to_owned(),
            AttributeInfo {
                kind,
                level: AttrLevel::Event,
            },
        );
    }

    if let Some(o) = overrides {
        if let Some(unknown) = o.keys().find(|k| !schema.contains_key(*k)) {
            return Err(IngestError::UnknownSchemaAttribute(unknown.clone()));
        }
    }

    let mut attrs_by_slot: Vec<BTreeMap<String, AttrValue>> = vec![BTreeMap::new(); raw.len()];
    for (slot, attrs) in record_attrs {
        for (k, v) in attrs {
            if let Some(value) = typed_value(&v, schema[&k].kind) {
                attrs_by_slot[slot].insert(k, value);
            }
        }
    }

    let records = raw
        .into_iter()
        .zip(attrs_by_slot)
        .map(|(r, attributes)| {
            let mut events: Vec<Event> = r
                .events
                .into_iter()
                .map(|(event_type, timestamp, attrs)| Event {
                    event_type,
                    timestamp,
                    attributes: attrs
                        .into_iter()
                        .filter_map(|(k, v)| {
                            let kind = schema[&k].kind;
                            typed_value(&v, kind).map(|value| (k, value))
                        })
                        .collect(),
                })
                .collect();
            // stable: equal timestamps keep file order
            events.sort_by_key(|e| e.timestamp);
            IndividualRecord {
                record_id: r.record_id,
                events,
                attributes,
            }
        })
        .collect();

    Ok(EventLog {
        records,
        alphabet,
        attribute_schema: schema,
    })
}

type AttrRow = (usize, Vec<(String, String)>);

fn read_attribute_file<A: Read>(
    input: A,
    by_id: &HashMap<String, usize>,
) -> Result<Vec<AttrRow>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let mut seen = std::collections::HashSet::new();
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != headers.len() {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", headers.len(), row.len()),
            });
        }
        let record_id = &row[0];
        let slot = *by_id
            .get(record_id)
            .ok_or_else(|| IngestError::UnknownRecord(record_id.to_owned()))?;
        if !seen.insert(slot) {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("duplicate attribute row for `{record_id}`"),
            });
        }
        let values = headers
            .iter()
            .skip(1)
            .zip(row.iter().skip(1))
            .map(|(h, v)| (h.clone(), v.to_owned()))
            .collect();
        rows.push((slot, values));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(events: &str) -> Result<EventLog, IngestError> {
        parse_event_log(events.as_bytes(), None::<&[u8]>)
    }

    #[test]
    fn two_records_three_events() {
        let csv = "record_id,event_type,timestamp\n\
                   r1,a,2020-01-01T00:00:00Z\n\
                   r1,b,2020-01-01T01:00:00Z\n\
                   r1,c,2020-01-01T02:00:00Z\n\
                   r2,a,2020-01-02T00:00:00Z\n\
                   r2,c,2020-01-02T01:00:00Z\n\
                   r2,d,2020-01-02T02:00:00Z\n";
        let log = parse(csv).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log.alphabet.names(), ["a", "b", "c", "d"]);
        assert_eq!(log.alphabet.gap_id(), 4);
        for r in &log.records {
            assert_eq!(r.events.len(), 3);
            assert!(r.events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        }
    }

    #[test]
    fn header_only_is_empty_dataset() {
        let err = parse("record_id,event_type,timestamp\n").unwrap_err();
        assert!(matches!(err, IngestError::EmptyDataset));
    }

    #[test]
    fn out_of_order_rows_are_sorted_stably() {
        let csv = "record_id,event_type,timestamp\n\
                   r1,c,2020-01-01T03:00:00Z\n\
                   r1,a,2020-01-01T01:00:00Z\n\
                   r1,x,2020-01-01T02:00:00Z\n\
                   r1,y,2020-01-01T02:00:00Z\n";
        let log = parse(csv).unwrap();
        let names: Vec<&str> = log.records[0]
            .events
            .iter()
            .map(|e| log.alphabet.name(e.event_type).unwrap())
            .collect();
        assert_eq!(names, ["a", "x", "y", "c"]);
    }

    #[test]
    fn malformed_rows() {
        let err = parse("record_id,event_type,timestamp\nr1,a\n").unwrap_err();
        assert!(matches!(err, IngestError::MalformedRow { .. }));
        let err = parse("record_id,event_type,timestamp\nr1,a,yesterday\n").unwrap_err();
        assert!(matches!(err, IngestError::MalformedRow { line: 2, .. }));
        let err = parse("record_id,event_type,timestamp\nr1,a,2020-01-01,oops\n").unwrap_err();
        assert!(matches!(err, IngestError::MalformedRow { .. }));
    }

    #[test]
    fn attribute_file_and_inference() {
        let events = "record_id,event_type,timestamp,extra\n\
                      r1,a,2020-01-01,site=north\n\
                      r2,b,2020-01-02 10:00,site=south\n";
        let attrs = "record_id,age,hospital,admitted\n\
                     r1,34,\"Children's\",2020-01-01\n\
                     r2,71,General,2020-01-02\n";
        let log = parse_event_log(events.as_bytes(), Some(attrs.as_bytes())).unwrap();
        assert_eq!(log.attribute_schema["age"].kind, AttrType::Numeric);
        assert_eq!(log.attribute_schema["hospital"].kind, AttrType::Categorical);
        assert_eq!(log.attribute_schema["admitted"].kind, AttrType::Date);
        assert_eq!(log.attribute_schema["site"].level, AttrLevel::Event);
        assert_eq!(log.records[0].attributes["age"], AttrValue::Number(34.0));
        assert_eq!(
            log.records[0].attributes["hospital"],
            AttrValue::Text("Children's".into())
        );
        assert_eq!(
            log.records[1].events[0].attributes["site"],
            AttrValue::Text("south".into())
        );
    }

    #[test]
    fn schema_override_forces_type() {
        let events = "record_id,event_type,timestamp\nr1,a,2020-01-01\n";
        let attrs = "record_id,zip\nr1,01234\n";
        let overrides = parse_schema_overrides(r#"{"zip": "categorical"}"#).unwrap();
        let log = parse_event_log_with_schema(
            events.as_bytes(),
            Some(attrs.as_bytes()),
            Some(&overrides),
        )
        .unwrap();
        assert_eq!(log.records[0].attributes["zip"], AttrValue::Text("01234".into()));
        let toml_overrides = parse_schema_overrides("zip = \"numeric\"").unwrap();
        assert_eq!(toml_overrides["zip"], AttrType::Numeric);
    }

    #[test]
    fn unknown_record_in_attributes() {
        let events = "record_id,event_type,timestamp\nr1,a,2020-01-01\n";
        let attrs = "record_id,age\nr9,3\n";
        let err = parse_event_log(events.as_bytes(), Some(attrs.as_bytes())).unwrap_err();
        assert!(matches!(err, IngestError::UnknownRecord(id) if id == "r9"));
    }

    #[test]
    fn dedup_exact_match() {
        let csv = "record_id,event_type,timestamp\n\
                   r1,a,2020-01-01T00:00:00Z\nr1,b,2020-01-01T00:01:00Z\nr1,c,2020-01-01T00:02:00Z\n\
                   r2,a,2020-01-01T00:00:00Z\nr2,b,2020-01-01T00:01:00Z\nr2,c,2020-01-01T00:02:00Z\n\
                   r3,a,2020-01-01T00:00:00Z\nr3,b,2020-01-01T00:01:00Z\nr3,d,2020-01-01T00:02:00Z\n";
        let log = parse(csv).unwrap();
        let set = deduplicate(&log);
        assert_eq!(set.len(), 2);
        let a = log.alphabet.id("a").unwrap();
        let b = log.alphabet.id("b").unwrap();
        let c = log.alphabet.id("c").unwrap();
        let d = log.alphabet.id("d").unwrap();
        assert_eq!(set.sequences[0].events, vec![a, b, c]);
        assert_eq!(set.sequences[0].frequency, 2);
        assert_eq!(set.sequences[0].member_record_ids, ["r1", "r2"]);
        assert_eq!(set.sequences[1].events, vec![a, b, d]);
        assert_eq!(set.sequences[1].frequency, 1);
        assert_eq!(set.total_records(), 3);
    }

    #[test]
    fn timestamps() {
        assert_eq!(parse_timestamp("1970-01-01T00:00:01Z"), Some(1000));
        assert_eq!(parse_timestamp("1970-01-01T01:00:00+01:00"), Some(0));
        assert_eq!(parse_timestamp("1970-01-02"), Some(86_400_000));
        assert_eq!(parse_timestamp("1970-01-01 00:00:00.250"), Some(250));
        assert_eq!(parse_timestamp("nope"), None);
        assert_eq!(format_timestamp(1000), "1970-01-01T00:00:01.000Z");
    }
}
