//! Daily weather-station records: CSV parsing, validation and gap repair.
//!
//! Every sensor field is optional. Values that fail validation are demoted to
//! missing, and interior runs of missing days no longer than `max_gap` are
//! filled by linear interpolation between the nearest present neighbours.
//! Leading and trailing runs are never extrapolated.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest interior outage (in days) that is repaired by interpolation.
pub const DEFAULT_MAX_GAP: usize = 14;

/// Exact header of the climate CSV schema, in canonical order.
pub const CLIMATE_HEADER: [&str; 15] = [
    "station_id",
    "date",
    "wd_avg",
    "ws_avg",
    "ws_max",
    "sr_avg",
    "rainfall",
    "d_min",
    "d_avg",
    "rh_min",
    "rh_avg",
    "rh_max",
    "at_min",
    "at_avg",
    "at_max",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("climate csv header is missing column `{0}`")]
    MissingColumn(String),
    #[error("climate csv header has unknown column `{0}`")]
    UnknownColumn(String),
    #[error("climate csv header lists column `{0}` twice")]
    DuplicateColumn(String),
    #[error("climate csv has no data rows")]
    NoDataRows,
    #[error("climate csv has {rows} data rows but none could be parsed")]
    NoValidRows { rows: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiteKind {
    WheatField,
    WinterQuarters,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationMeta {
    pub station_id: String,
    pub site_kind: SiteKind,
    pub location_name: String,
}

/// The thirteen sensor columns of a climate record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClimateField {
    WdAvg,
    WsAvg,
    WsMax,
    SrAvg,
    Rainfall,
    DMin,
    DAvg,
    RhMin,
    RhAvg,
    RhMax,
    AtMin,
    AtAvg,
    AtMax,
}

impl ClimateField {
    pub const ALL: [ClimateField; 13] = [
        ClimateField::WdAvg,
        ClimateField::WsAvg,
        ClimateField::WsMax,
        ClimateField::SrAvg,
        ClimateField::Rainfall,
        ClimateField::DMin,
        ClimateField::DAvg,
        ClimateField::RhMin,
        ClimateField::RhAvg,
        ClimateField::RhMax,
        ClimateField::AtMin,
        ClimateField::AtAvg,
        ClimateField::AtMax,
    ];

    pub fn name(self) -> &'static str {
        CLIMATE_HEADER[2 + self as usize]
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }
}

impl fmt::Display for ClimateField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One station-day of sensor readings. `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawClimateRecord {
    pub station_id: String,
    pub date: NaiveDate,
    pub wd_avg: Option<f64>,
    pub ws_avg: Option<f64>,
    pub ws_max: Option<f64>,
    pub sr_avg: Option<f64>,
    pub rainfall: Option<f64>,
    pub d_min: Option<f64>,
    pub d_avg: Option<f64>,
    pub rh_min: Option<f64>,
    pub rh_avg: Option<f64>,
    pub rh_max: Option<f64>,
    pub at_min: Option<f64>,
    pub at_avg: Option<f64>,
    pub at_max: Option<f64>,
}

impl RawClimateRecord {
    /// A record with every sensor field missing.
    pub fn empty(station_id: impl Into<String>, date: NaiveDate) -> Self {
        RawClimateRecord {
            station_id: station_id.into(),
            date,
            wd_avg: None,
            ws_avg: None,
            ws_max: None,
            sr_avg: None,
            rainfall: None,
            d_min: None,
            d_avg: None,
            rh_min: None,
            rh_avg: None,
            rh_max: None,
            at_min: None,
            at_avg: None,
            at_max: None,
        }
    }

    pub fn get(&self, field: ClimateField) -> Option<f64> {
        *self.slot(field)
    }

    pub fn set(&mut self, field: ClimateField, value: Option<f64>) {
        *self.slot_mut(field) = value;
    }

    fn slot(&self, field: ClimateField) -> &Option<f64> {
        match field {
            ClimateField::WdAvg => &self.wd_avg,
            ClimateField::WsAvg => &self.ws_avg,
            ClimateField::WsMax => &self.ws_max,
            ClimateField::SrAvg => &self.sr_avg,
            ClimateField::Rainfall => &self.rainfall,
            ClimateField::DMin => &self.d_min,
            ClimateField::DAvg => &self.d_avg,
            ClimateField::RhMin => &self.rh_min,
            ClimateField::RhAvg => &self.rh_avg,
            ClimateField::RhMax => &self.rh_max,
            ClimateField::AtMin => &self.at_min,
            ClimateField::AtAvg => &self.at_avg,
            ClimateField::AtMax => &self.at_max,
        }
    }

    fn slot_mut(&mut self, field: ClimateField) -> &mut Option<f64> {
        match field {
            ClimateField::WdAvg => &mut self.wd_avg,
            ClimateField::WsAvg => &mut self.ws_avg,
            ClimateField::WsMax => &mut self.ws_max,
            ClimateField::SrAvg => &mut self.sr_avg,
            ClimateField::Rainfall => &mut self.rainfall,
            ClimateField::DMin => &mut self.d_min,
            ClimateField::DAvg => &mut self.d_avg,
            ClimateField::RhMin => &mut self.rh_min,
            ClimateField::RhAvg => &mut self.rh_avg,
            ClimateField::RhMax => &mut self.rh_max,
            ClimateField::AtMin => &mut self.at_min,
            ClimateField::AtAvg => &mut self.at_avg,
            ClimateField::AtMax => &mut self.at_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagnosticKind {
    EmptyCell,
    UnparseableCell,
    BadDate,
    MissingStation,
    ForeignStation,
    DuplicateRow,
    WrongFieldCount,
}

/// A non-fatal problem found while parsing; `line` is 1-based and counts the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub line: u64,
    pub kind: DiagnosticKind,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedClimate {
    /// Sorted by (station_id, date), at most one record per key.
    pub records: Vec<RawClimateRecord>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

/// Parses a climate CSV. When `meta` is given, rows for any other station are
/// skipped with a diagnostic.
pub fn parse_climate_csv(
    text: &str,
    meta: Option<&StationMeta>,
) -> Result<ParsedClimate, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header = reader.headers()?.clone();
    let columns = map_header(&header)?;

    let mut by_key: BTreeMap<(String, NaiveDate), RawClimateRecord> = BTreeMap::new();
    let mut diagnostics = Vec::new();
    let mut data_rows = 0usize;

    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.iter().all(str::is_empty) {
            continue;
        }
        data_rows += 1;
        if row.len() != CLIMATE_HEADER.len() {
            diagnostics.push(ParseDiagnostic {
                line,
                kind: DiagnosticKind::WrongFieldCount,
                message: format!("expected {} fields, found {}", CLIMATE_HEADER.len(), row.len()),
            });
            continue;
        }

        let station = row.get(columns.station).unwrap_or_default();
        if station.is_empty() {
            diagnostics.push(ParseDiagnostic {
                line,
                kind: DiagnosticKind::MissingStation,
                message: "empty station_id".into(),
            });
            continue;
        }
        if let Some(meta) = meta {
            if station != meta.station_id {
                diagnostics.push(ParseDiagnostic {
                    line,
                    kind: DiagnosticKind::ForeignStation,
                    message: format!("row for station `{station}`, expected `{}`", meta.station_id),
                });
                continue;
            }
        }
        let date_cell = row.get(columns.date).unwrap_or_default();
        let date = match NaiveDate::parse_from_str(date_cell, "%Y-%m-%d") {
            Ok(d) => d,
            Err(_) => {
                diagnostics.push(ParseDiagnostic {
                    line,
                    kind: DiagnosticKind::BadDate,
                    message: format!("date `{date_cell}` is not YYYY-MM-DD"),
                });
                continue;
            }
        };

        let mut record = RawClimateRecord::empty(station, date);
        for (field, col) in &columns.fields {
            let cell = row.get(*col).unwrap_or_default();
            if cell.is_empty() {
                diagnostics.push(ParseDiagnostic {
                    line,
                    kind: DiagnosticKind::EmptyCell,
                    message: format!("{field} is empty"),
                });
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => record.set(*field, Some(v)),
                _ => diagnostics.push(ParseDiagnostic {
                    line,
                    kind: DiagnosticKind::UnparseableCell,
                    message: format!("{field} value `{cell}` is not a finite number"),
                }),
            }
        }

        let key = (record.station_id.clone(), date);
        if by_key.insert(key, record).is_some() {
            diagnostics.push(ParseDiagnostic {
                line,
                kind: DiagnosticKind::DuplicateRow,
                message: format!("duplicate row for {station} {date}; later row wins"),
            });
        }
    }

    if data_rows == 0 {
        return Err(IngestError::NoDataRows);
    }
    if by_key.is_empty() {
        return Err(IngestError::NoValidRows { rows: data_rows });
    }
    Ok(ParsedClimate {
        records: by_key.into_values().collect(),
        diagnostics,
    })
}

struct ColumnMap {
    station: usize,
    date: usize,
    fields: Vec<(ClimateField, usize)>,
}

fn map_header(header: &csv::StringRecord) -> Result<ColumnMap, IngestError> {
    let mut positions: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, name) in header.iter().enumerate() {
        let name = name.trim_start_matches('\u{feff}');
        let canonical = CLIMATE_HEADER
            .iter()
            .find(|h| **h == name)
            .ok_or_else(|| IngestError::UnknownColumn(name.to_string()))?;
        if positions.insert(canonical, i).is_some() {
            return Err(IngestError::DuplicateColumn(name.to_string()));
        }
    }
    let col = |name: &str| {
        positions
            .get(name)
            .copied()
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let mut fields = Vec::with_capacity(ClimateField::ALL.len());
    for field in ClimateField::ALL {
        fields.push((field, col(field.name())?));
    }
    Ok(ColumnMap {
        station: col("station_id")?,
        date: col("date")?,
        fields,
    })
}

/// Serializes records in the canonical column order. Missing values are empty
/// cells; numbers use shortest round-trip formatting.
pub fn write_climate_csv(records: &[RawClimateRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 96 + 128);
    out.push_str(&CLIMATE_HEADER.join(","));
    out.push('\n');
    for r in records {
        out.push_str(&r.station_id);
        out.push(',');
        out.push_str(&r.date.format("%Y-%m-%d").to_string());
        for field in ClimateField::ALL {
            out.push(',');
            if let Some(v) = r.get(field) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    Range,
    Ordering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Every field implicated; all of them are demoted when repairing.
    pub fields: Vec<ClimateField>,
    pub message: String,
}

/// Returns every range and ordering violation in `r`. Empty means valid.
pub fn validate_record(r: &RawClimateRecord) -> Vec<Violation> {
    use ClimateField::*;

    let mut out = Vec::new();
    let mut range = |field: ClimateField, ok: fn(f64) -> bool, bound: &str| {
        if let Some(v) = r.get(field) {
            if !ok(v) {
                out.push(Violation {
                    kind: ViolationKind::Range,
                    fields: vec![field],
                    message: format!("{field}={v} outside {bound}"),
                });
            }
        }
    };
    range(WdAvg, |v| (0.0..360.0).contains(&v), "[0,360)");
    range(WsAvg, |v| v >= 0.0, "[0,inf)");
    range(WsMax, |v| v >= 0.0, "[0,inf)");
    range(SrAvg, |v| v >= 0.0, "[0,inf)");
    range(Rainfall, |v| v >= 0.0, "[0,inf)");
    range(RhMin, |v| (0.0..=100.0).contains(&v), "[0,100]");
    range(RhAvg, |v| (0.0..=100.0).contains(&v), "[0,100]");
    range(RhMax, |v| (0.0..=100.0).contains(&v), "[0,100]");

    let mut ordered = |lo: ClimateField, hi: ClimateField| {
        if let (Some(a), Some(b)) = (r.get(lo), r.get(hi)) {
            if a > b {
                out.push(Violation {
                    kind: ViolationKind::Ordering,
                    fields: vec![lo, hi],
                    message: format!("{lo}={a} exceeds {hi}={b}"),
                });
            }
        }
    };
    for (min, avg, max) in [(RhMin, RhAvg, RhMax), (AtMin, AtAvg, AtMax)] {
        ordered(min, avg);
        ordered(avg, max);
        if r.get(avg).is_none() {
            ordered(min, max);
        }
    }
    ordered(WsAvg, WsMax);
    ordered(DMin, DAvg);
    out
}

/// Demotes every field implicated in a violation to missing and returns the violations.
pub fn demote_invalid(r: &mut RawClimateRecord) -> Vec<Violation> {
    let violations = validate_record(r);
    for v in &violations {
        for f in &v.fields {
            r.set(*f, None);
        }
    }
    violations
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepairStatus {
    Interpolated,
    Unrepairable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapSpan {
    pub field: ClimateField,
    pub first: NaiveDate,
    pub last: NaiveDate,
    pub status: RepairStatus,
}

impl GapSpan {
    pub fn days(&self) -> i64 {
        (self.last - self.first).num_days() + 1
    }
}

/// Gap spans for one station, sorted by (field, first date).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GapReport {
    pub station_id: String,
    pub spans: Vec<GapSpan>,
}

impl GapReport {
    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn unrepairable(&self) -> impl Iterator<Item = &GapSpan> {
        self.spans
            .iter()
            .filter(|s| s.status == RepairStatus::Unrepairable)
    }
}

/// A maximal run of missing entries, as index bounds into a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MissingRun {
    pub start: usize,
    pub end: usize,
    pub repaired: bool,
}

/// Fills interior runs of at most `max_gap` missing values in place.
/// Present values are never modified. Returns every missing run found.
pub fn interpolate_values(values: &mut [Option<f64>], max_gap: usize) -> Vec<MissingRun> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < values.len() {
        if values[i].is_some() {
            i += 1;
            continue;
        }
        let start = i;
        while i < values.len() && values[i].is_none() {
            i += 1;
        }
        let end = i - 1;
        let len = end - start + 1;
        let bounded = start > 0 && i < values.len();
        let repaired = bounded && len <= max_gap;
        if repaired {
            let (left, a) = (start - 1, values[start - 1].unwrap_or_default());
            let (right, b) = (i, values[i].unwrap_or_default());
            let span = (right - left) as f64;
            for (k, slot) in values.iter_mut().enumerate().take(end + 1).skip(start) {
                *slot = Some(a + (b - a) * (k - left) as f64 / span);
            }
        }
        runs.push(MissingRun {
            start,
            end,
            repaired,
        });
    }
    runs
}

/// Reindexes one station's records onto a contiguous daily calendar from its
/// first to last date, inserting all-missing records for absent days.
/// Input must be sorted by date without duplicates.
pub fn fill_calendar(records: &[RawClimateRecord]) -> Vec<RawClimateRecord> {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(((last.date - first.date).num_days() + 1) as usize);
    let mut it = records.iter().peekable();
    let mut day = first.date;
    while day <= last.date {
        match it.peek() {
            Some(r) if r.date == day => {
                out.push((*it.next().unwrap()).clone());
            }
            _ => out.push(RawClimateRecord::empty(first.station_id.clone(), day)),
        }
        day = day.succ_opt().expect("date overflow");
    }
    out
}

/// Repairs one station's series. Absent calendar days count as missing; every
/// field is interpolated independently. The output is contiguous by day.
pub fn interpolate_gaps(
    series: &[RawClimateRecord],
    max_gap: usize,
) -> (Vec<RawClimateRecord>, GapReport) {
    let mut repaired = fill_calendar(series);
    let station_id = repaired
        .first()
        .map(|r| r.station_id.clone())
        .unwrap_or_default();
    let mut spans = Vec::new();
    for field in ClimateField::ALL {
        let mut values: Vec<Option<f64>> = repaired.iter().map(|r| r.get(field)).collect();
        for run in interpolate_values(&mut values, max_gap) {
            spans.push(GapSpan {
                field,
                first: repaired[run.start].date,
                last: repaired[run.end].date,
                status: if run.repaired {
                    RepairStatus::Interpolated
                } else {
                    RepairStatus::Unrepairable
                },
            });
        }
        for (r, v) in repaired.iter_mut().zip(values) {
            r.set(field, v);
        }
    }
    (repaired, GapReport { station_id, spans })
}

/// Output of [`repair_all`]: per-station contiguous series plus bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct RepairedClimate {
    pub stations: BTreeMap<String, Vec<RawClimateRecord>>,
    pub gap_reports: Vec<GapReport>,
    pub violations: Vec<(String, NaiveDate, Violation)>,
}

/// Validates, demotes and interpolates a parsed multi-station record set.
pub fn repair_all(records: Vec<RawClimateRecord>, max_gap: usize) -> RepairedClimate {
    let mut grouped: BTreeMap<String, Vec<RawClimateRecord>> = BTreeMap::new();
    let mut violations = Vec::new();
    for mut r in records {
        for v in demote_invalid(&mut r) {
            violations.push((r.station_id.clone(), r.date, v));
        }
        grouped.entry(r.station_id.clone()).or_default().push(r);
    }
    let mut out = RepairedClimate {
        violations,
        ..Default::default()
    };
    for (station, mut recs) in grouped {
        recs.sort_by_key(|r| r.date);
        recs.dedup_by_key(|r| r.date);
        let (series, report) = interpolate_gaps(&recs, max_gap);
        out.gap_reports.push(report);
        out.stations.insert(station, series);
    }
    out
}
