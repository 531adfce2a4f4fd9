//! Sensor reading storage and queries.
//!
//! [`TimeSeries`] is the single source of truth for measurements. It keeps an
//! id-ordered vector of readings plus a `(captured_at, id)` index so that
//! recent and range queries are binary searches. Writes go through a
//! [`Journal`] first, so a file-backed series survives restarts by replay.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::journal::{self, FileJournal, Journal, JournalError, MemoryJournal};

pub const CSV_HEADER: &str = "device_id,captured_at,temperature,humidity,co2,pm1_0,pm2_5,pm10";

/// Decimal places kept for every measurement.
pub const MEASUREMENT_DECIMALS: i32 = 6;

pub const TEMPERATURE_RANGE: (f64, f64) = (-90.0, 90.0);
pub const HUMIDITY_RANGE: (f64, f64) = (0.0, 100.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReadingFlag {
    /// `pm1_0 <= pm2_5 <= pm10` does not hold.
    #[serde(rename = "pm-ordering")]
    PmOrdering,
}

impl ReadingFlag {
    pub fn label(self) -> &'static str {
        match self {
            ReadingFlag::PmOrdering => "pm-ordering",
        }
    }
}

impl fmt::Display for ReadingFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub device_id: String,
    pub captured_at: DateTime<Utc>,
    pub temperature: f64,
    pub humidity: f64,
    pub co2: f64,
    pub pm1_0: f64,
    pub pm2_5: f64,
    pub pm10: f64,
    #[serde(default)]
    pub flags: BTreeSet<ReadingFlag>,
}

/// A measurement outside its physical bounds.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct BoundViolation {
    pub field: &'static str,
    pub message: String,
}

impl SensorReading {
    /// Build a normalized reading: second-resolution timestamp, measurements
    /// rounded to [`MEASUREMENT_DECIMALS`] and flags derived from the values.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        device_id: impl Into<String>,
        captured_at: DateTime<Utc>,
        temperature: f64,
        humidity: f64,
        co2: f64,
        pm1_0: f64,
        pm2_5: f64,
        pm10: f64,
    ) -> Self {
        Self {
            device_id: device_id.into(),
            captured_at,
            temperature,
            humidity,
            co2,
            pm1_0,
            pm2_5,
            pm10,
            flags: BTreeSet::new(),
        }
        .normalized()
    }

    pub fn normalized(mut self) -> Self {
        self.captured_at = self.captured_at.trunc_subsecs(0);
        for field in Field::ALL {
            let v = field.value(&self);
            *field.value_mut(&mut self) = round_measurement(v);
        }
        self.flags = self.derived_flags();
        self
    }

    pub fn derived_flags(&self) -> BTreeSet<ReadingFlag> {
        let mut flags = BTreeSet::new();
        if !(self.pm1_0 <= self.pm2_5 && self.pm2_5 <= self.pm10) {
            flags.insert(ReadingFlag::PmOrdering);
        }
        flags
    }

    /// Check the hard bounds. Ordering of the PM fractions is a flag, not a
    /// violation.
    pub fn check_bounds(&self) -> Result<(), BoundViolation> {
        if self.device_id.is_empty() {
            return Err(BoundViolation {
                field: "device_id",
                message: "must be a non-empty string".into(),
            });
        }
        for field in Field::ALL {
            let v = field.value(self);
            if !v.is_finite() {
                return Err(BoundViolation {
                    field: field.name(),
                    message: "must be a finite number".into(),
                });
            }
            let (lo, hi) = field.bounds();
            if v < lo || v > hi {
                let message = if hi.is_infinite() {
                    format!("must be >= {lo}, got {v}")
                } else {
                    format!("must be within [{lo}, {hi}], got {v}")
                };
                return Err(BoundViolation {
                    field: field.name(),
                    message,
                });
            }
        }
        Ok(())
    }
}

fn round_measurement(v: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    let scale = 10f64.powi(MEASUREMENT_DECIMALS);
    let scaled = v * scale;
    // beyond 2^53 the value has no fractional digits left to round
    if scaled.abs() >= 9.007_199_254_740_992e15 {
        return v;
    }
    let r = scaled.round() / scale;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// The six numeric measurement columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Temperature,
    Humidity,
    Co2,
    #[serde(rename = "pm1_0")]
    Pm1_0,
    #[serde(rename = "pm2_5")]
    Pm2_5,
    Pm10,
}

impl Field {
    pub const ALL: [Field; 6] = [
        Field::Temperature,
        Field::Humidity,
        Field::Co2,
        Field::Pm1_0,
        Field::Pm2_5,
        Field::Pm10,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::Temperature => "temperature",
            Field::Humidity => "humidity",
            Field::Co2 => "co2",
            Field::Pm1_0 => "pm1_0",
            Field::Pm2_5 => "pm2_5",
            Field::Pm10 => "pm10",
        }
    }

    pub fn value(self, r: &SensorReading) -> f64 {
        match self {
            Field::Temperature => r.temperature,
            Field::Humidity => r.humidity,
            Field::Co2 => r.co2,
            Field::Pm1_0 => r.pm1_0,
            Field::Pm2_5 => r.pm2_5,
            Field::Pm10 => r.pm10,
        }
    }

    fn value_mut(self, r: &mut SensorReading) -> &mut f64 {
        match self {
            Field::Temperature => &mut r.temperature,
            Field::Humidity => &mut r.humidity,
            Field::Co2 => &mut r.co2,
            Field::Pm1_0 => &mut r.pm1_0,
            Field::Pm2_5 => &mut r.pm2_5,
            Field::Pm10 => &mut r.pm10,
        }
    }

    /// Inclusive physical bounds.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Field::Temperature => TEMPERATURE_RANGE,
            Field::Humidity => HUMIDITY_RANGE,
            Field::Co2 | Field::Pm1_0 | Field::Pm2_5 | Field::Pm10 => (0.0, f64::INFINITY),
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown field `{0}` (expected one of temperature, humidity, co2, pm1_0, pm2_5, pm10)")]
pub struct UnknownField(pub String);

impl FromStr for Field {
    type Err = UnknownField;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| UnknownField(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("invalid time range: start {start} is after end {end}")]
pub struct InvalidRange {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

/// Closed interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TimeRange {
    start: DateTime<Utc>,
    end: DateTime<Utc>,
}

impl TimeRange {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self, InvalidRange> {
        if start > end {
            return Err(InvalidRange { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn everything() -> Self {
        Self {
            start: DateTime::<Utc>::MIN_UTC,
            end: DateTime::<Utc>::MAX_UTC,
        }
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.end
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub field_name: String,
    pub count: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("storage I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("refusing to store invalid reading: {0}")]
    Invalid(#[from] BoundViolation),
}

#[derive(Debug, thiserror::Error)]
pub enum CsvImportError {
    #[error("csv line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("csv header must be `{CSV_HEADER}`")]
    Header,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Default)]
struct State {
    // index i holds the reading with id i + 1
    by_id: Vec<SensorReading>,
    // (captured_at, id), ascending
    order: Vec<(DateTime<Utc>, u64)>,
}

impl State {
    fn push(&mut self, reading: SensorReading) -> u64 {
        self.by_id.push(reading);
        let id = self.by_id.len() as u64;
        let key = (self.by_id[id as usize - 1].captured_at, id);
        let pos = self.order.partition_point(|k| *k < key);
        self.order.insert(pos, key);
        id
    }

    fn get(&self, id: u64) -> &SensorReading {
        &self.by_id[id as usize - 1]
    }

    fn range_slice(&self, range: &TimeRange) -> &[(DateTime<Utc>, u64)] {
        let lo = self.order.partition_point(|(t, _)| *t < range.start);
        let hi = self.order.partition_point(|(t, _)| *t <= range.end);
        &self.order[lo..hi.max(lo)]
    }
}

/// Reading store. Safe to share between threads; every operation takes the
/// lock once, so readers always observe a consistent snapshot.
pub struct TimeSeries {
    state: RwLock<State>,
    journal: Box<dyn Journal>,
}

impl fmt::Debug for TimeSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeSeries")
            .field("len", &self.len())
            .finish_non_exhaustive()
    }
}

impl Default for TimeSeries {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl TimeSeries {
    pub fn in_memory() -> Self {
        Self {
            state: RwLock::new(State::default()),
            journal: Box::new(MemoryJournal::new()),
        }
    }

    /// Rebuild from `journal`, then keep appending to it.
    pub fn open(journal: Box<dyn Journal>) -> Result<Self, StoreError> {
        let mut state = State::default();
        for reading in journal::replay::<SensorReading>(journal.as_ref())? {
            state.push(reading.normalized());
        }
        Ok(Self {
            state: RwLock::new(state),
            journal,
        })
    }

    pub fn open_file(path: impl AsRef<std::path::Path>) -> Result<Self, StoreError> {
        Self::open(Box::new(FileJournal::open(path)?))
    }

    pub fn len(&self) -> usize {
        self.state.read().by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Store a reading and return its id. Ids start at 1 and increase by one
    /// per insert.
    pub fn insert(&self, reading: SensorReading) -> Result<u64, StoreError> {
        let reading = reading.normalized();
        reading.check_bounds()?;
        let mut state = self.state.write();
        journal::append_record(self.journal.as_ref(), &reading)?;
        Ok(state.push(reading))
    }

    pub fn get(&self, id: u64) -> Option<SensorReading> {
        let state = self.state.read();
        if id == 0 || id as usize > state.by_id.len() {
            return None;
        }
        Some(state.get(id).clone())
    }

    /// Up to `limit` readings, newest first. Equal timestamps are ordered by
    /// descending id.
    pub fn query_recent(&self, limit: usize) -> Vec<SensorReading> {
        let state = self.state.read();
        state
            .order
            .iter()
            .rev()
            .take(limit)
            .map(|&(_, id)| state.get(id).clone())
            .collect()
    }

    /// Readings with `start <= captured_at <= end`, oldest first.
    pub fn query_range(&self, range: &TimeRange) -> Vec<SensorReading> {
        let state = self.state.read();
        state
            .range_slice(range)
            .iter()
            .map(|&(_, id)| state.get(id).clone())
            .collect()
    }

    pub fn aggregate(&self, range: &TimeRange, field: Field) -> AggregateStats {
        let state = self.state.read();
        let mut count = 0u64;
        let mut sum = 0.0f64;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &(_, id) in state.range_slice(range) {
            let v = field.value(state.get(id));
            count += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        if count == 0 {
            return AggregateStats {
                field_name: field.name().to_owned(),
                count,
                min: None,
                max: None,
                mean: None,
            };
        }
        let mean = (sum / count as f64).clamp(min, max);
        AggregateStats {
            field_name: field.name().to_owned(),
            count,
            min: Some(min),
            max: Some(max),
            mean: Some(mean),
        }
    }

    pub fn export_csv(&self, range: &TimeRange) -> Vec<u8> {
        write_csv(&self.query_range(range))
    }

    pub fn flush(&self) -> Result<(), StoreError> {
        self.journal.flush()?;
        Ok(())
    }
}

/// Render a measurement with at most six decimals and no trailing zeros.
pub fn format_measurement(v: f64) -> String {
    let mut s = format!("{:.*}", MEASUREMENT_DECIMALS as usize, v);
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn write_csv(readings: &[SensorReading]) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 * (readings.len() + 1));
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut out);
        w.write_record(CSV_HEADER.split(','))
            .expect("writing to a Vec cannot fail");
        for r in readings {
            let mut row = Vec::with_capacity(8);
            row.push(r.device_id.clone());
            row.push(format_timestamp(r.captured_at));
            row.extend(Field::ALL.iter().map(|f| format_measurement(f.value(r))));
            w.write_record(&row).expect("writing to a Vec cannot fail");
        }
        w.flush().expect("writing to a Vec cannot fail");
    }
    out
}

/// Parse bytes produced by [`write_csv`] back into readings.
pub fn import_csv(bytes: &[u8]) -> Result<Vec<SensorReading>, CsvImportError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(CsvImportError::Header);
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row_err = |message: String| CsvImportError::Row { line, message };
        if record.len() != 8 {
            return Err(row_err(format!("expected 8 columns, found {}", record.len())));
        }
        let captured_at = DateTime::parse_from_rfc3339(&record[1])
            .map_err(|e| row_err(format!("captured_at: {e}")))?
            .with_timezone(&Utc);
        let mut values = [0f64; 6];
        for (i, field) in Field::ALL.iter().enumerate() {
            values[i] = record[i + 2]
                .parse()
                .map_err(|e| row_err(format!("{field}: {e}")))?;
        }
        out.push(SensorReading::new(
            &record[0], captured_at, values[0], values[1], values[2], values[3], values[4],
            values[5],
        ));
    }
    Ok(out)
}
