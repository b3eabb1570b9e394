//! Life-cycle accumulation, label handling and the three model feature sets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{ClimateField, RawClimateRecord};

pub const LABEL_HEADER: [&str; 8] = ["station_id", "date", "phase", "n1", "n2", "n3", "n4", "n5"];

/// Raw fields used by the learners, in feature-vector order. Wind direction is
/// ingested but never used as a feature.
pub const MODEL_FIELDS: [ClimateField; 10] = [
    ClimateField::WsAvg,
    ClimateField::WsMax,
    ClimateField::SrAvg,
    ClimateField::Rainfall,
    ClimateField::RhAvg,
    ClimateField::AtMin,
    ClimateField::AtAvg,
    ClimateField::AtMax,
    ClimateField::DMin,
    ClimateField::DAvg,
];

const REDUCED_FIELDS: [ClimateField; 6] = [
    ClimateField::SrAvg,
    ClimateField::Rainfall,
    ClimateField::RhAvg,
    ClimateField::AtMin,
    ClimateField::AtAvg,
    ClimateField::AtMax,
];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cycle start day-of-year must be in 1..=366, got {0}")]
    BadCycleStart(u32),
    #[error("{station} {date}: field {field} is missing; drop incomplete days before accumulating")]
    MissingValue {
        station: String,
        date: NaiveDate,
        field: ClimateField,
    },
    #[error("label csv: {0}")]
    LabelCsv(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset is empty after joining climate and labels ({dropped} days dropped)")]
    EmptyDataset { dropped: usize },
    #[error("unknown model id `{0}` (expected m1, m2 or m3)")]
    UnknownModel(String),
    #[error("invalid nymph stage ratios: {0}")]
    BadRatios(String),
}

/// Day-of-year on which accumulation restarts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SeasonClock {
    cycle_start: u32,
}

impl Default for SeasonClock {
    fn default() -> Self {
        SeasonClock { cycle_start: 1 }
    }
}

impl TryFrom<u32> for SeasonClock {
    type Error = FeatureError;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        SeasonClock::new(value)
    }
}

impl From<SeasonClock> for u32 {
    fn from(c: SeasonClock) -> u32 {
        c.cycle_start
    }
}

impl SeasonClock {
    pub fn new(cycle_start: u32) -> Result<Self, FeatureError> {
        if (1..=366).contains(&cycle_start) {
            Ok(SeasonClock { cycle_start })
        } else {
            Err(FeatureError::BadCycleStart(cycle_start))
        }
    }

    pub fn cycle_start(&self) -> u32 {
        self.cycle_start
    }

    /// The most recent date on or before `date` whose day-of-year equals the
    /// cycle start. Day 366 only exists in leap years.
    pub fn cycle_start_for(&self, date: NaiveDate) -> NaiveDate {
        let mut year = date.year();
        loop {
            if let Some(start) = NaiveDate::from_yo_opt(year, self.cycle_start) {
                if start <= date {
                    return start;
                }
            }
            year -= 1;
        }
    }

    /// First cycle start on or after `date`.
    pub fn next_cycle_start(&self, date: NaiveDate) -> NaiveDate {
        let mut year = date.year();
        loop {
            if let Some(start) = NaiveDate::from_yo_opt(year, self.cycle_start) {
                if start >= date {
                    return start;
                }
            }
            year += 1;
        }
    }
}

/// Running sums of the model fields since the current cycle start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccumulatedRecord {
    pub station_id: String,
    pub date: NaiveDate,
    pub cycle_start: NaiveDate,
    /// Indexed like [`MODEL_FIELDS`].
    pub sums: [f64; 10],
}

impl AccumulatedRecord {
    pub fn acc(&self, field: ClimateField) -> Option<f64> {
        MODEL_FIELDS
            .iter()
            .position(|f| *f == field)
            .map(|i| self.sums[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum PhaseLabel {
    WinterQuarters = 1,
    Migration = 2,
    WheatField = 3,
}

impl PhaseLabel {
    pub const ALL: [PhaseLabel; 3] = [
        PhaseLabel::WinterQuarters,
        PhaseLabel::Migration,
        PhaseLabel::WheatField,
    ];

    /// Zero-based class index used by the classifier.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn number(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for PhaseLabel {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(PhaseLabel::WinterQuarters),
            2 => Ok(PhaseLabel::Migration),
            3 => Ok(PhaseLabel::WheatField),
            _ => Err(format!("phase must be 1, 2 or 3, got {v}")),
        }
    }
}

impl From<PhaseLabel> for u8 {
    fn from(p: PhaseLabel) -> u8 {
        p.number()
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Stage 1..5 composition of a nymph count, as fractions summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct NymphStageRatios([f64; 5]);

impl NymphStageRatios {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(r: [f64; 5]) -> Result<Self, FeatureError> {
        if let Some(bad) = r.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FeatureError::BadRatios(format!("ratio {bad} outside [0,1]")));
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(FeatureError::BadRatios(format!("ratios sum to {sum}")));
        }
        Ok(NymphStageRatios(r))
    }

    pub fn as_array(&self) -> &[f64; 5] {
        &self.0
    }

    /// Ratio of stage `stage` (1-based).
    pub fn stage(&self, stage: usize) -> f64 {
        self.0[stage - 1]
    }

    /// 1-based stage holding the largest share; ties go to the earlier stage.
    pub fn dominant_stage(&self) -> usize {
        let mut best = 0;
        for i in 1..5 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        best + 1
    }
}

impl TryFrom<[f64; 5]> for NymphStageRatios {
    type Error = FeatureError;

    fn try_from(r: [f64; 5]) -> Result<Self, FeatureError> {
        NymphStageRatios::new(r)
    }
}

impl From<NymphStageRatios> for [f64; 5] {
    fn from(r: NymphStageRatios) -> [f64; 5] {
        r.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelId {
    #[serde(rename = "m1")]
    M1Raw,
    #[serde(rename = "m2")]
    M2Accumulated,
    #[serde(rename = "m3")]
    M3AccumulatedReduced,
}

impl ModelId {
    pub fn fields(self) -> &'static [ClimateField] {
        match self {
            ModelId::M1Raw | ModelId::M2Accumulated => &MODEL_FIELDS,
            ModelId::M3AccumulatedReduced => &REDUCED_FIELDS,
        }
    }

    pub fn is_accumulated(self) -> bool {
        !matches!(self, ModelId::M1Raw)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ModelId::M1Raw => "m1",
            ModelId::M2Accumulated => "m2",
            ModelId::M3AccumulatedReduced => "m3",
        }
    }
}

impl FromStr for ModelId {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, FeatureError> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(ModelId::M1Raw),
            "m2" => Ok(ModelId::M2Accumulated),
            "m3" => Ok(ModelId::M3AccumulatedReduced),
            _ => Err(FeatureError::UnknownModel(s.to_string())),
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Ordered feature names for one of the three model variants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSetSpec {
    pub model_id: ModelId,
    pub fields: Vec<String>,
}

impl FeatureSetSpec {
    pub fn for_model(model_id: ModelId) -> Self {
        let prefix = if model_id.is_accumulated() { "acc_" } else { "" };
        FeatureSetSpec {
            model_id,
            fields: model_id
                .fields()
                .iter()
                .map(|f| format!("{prefix}{}", f.name()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// True when this is exactly one of the three canonical specs.
    pub fn is_canonical(&self) -> bool {
        *self == FeatureSetSpec::for_model(self.model_id)
    }

    /// Feature vector for one day. `None` if any required value is missing.
    pub fn extract(&self, raw: &RawClimateRecord, acc: Option<&AccumulatedRecord>) -> Option<Vec<f64>> {
        self.model_id
            .fields()
            .iter()
            .map(|f| {
                if self.model_id.is_accumulated() {
                    acc.and_then(|a| a.acc(*f))
                } else {
                    raw.get(*f)
                }
            })
            .collect()
    }
}

/// Splits a contiguous repaired series into days with every model field
/// present and the dates that must be dropped.
pub fn drop_incomplete(series: Vec<RawClimateRecord>) -> (Vec<RawClimateRecord>, Vec<(String, NaiveDate)>) {
    let mut kept = Vec::with_capacity(series.len());
    let mut dropped = Vec::new();
    for r in series {
        if MODEL_FIELDS.iter().all(|f| r.get(*f).is_some()) {
            kept.push(r);
        } else {
            dropped.push((r.station_id.clone(), r.date));
        }
    }
    (kept, dropped)
}

/// Per-station running sums of the model fields, restarting on the first day
/// of each cycle. Input must be sorted by (station, date) and complete in the
/// model fields.
pub fn accumulate_season(
    series: &[RawClimateRecord],
    clock: SeasonClock,
) -> Result<Vec<AccumulatedRecord>, FeatureError> {
    let mut out: Vec<AccumulatedRecord> = Vec::with_capacity(series.len());
    for r in series {
        let cycle_start = clock.cycle_start_for(r.date);
        let mut sums = match out.last() {
            Some(prev) if prev.station_id == r.station_id && prev.cycle_start == cycle_start => prev.sums,
            _ => [0.0; 10],
        };
        for (sum, field) in sums.iter_mut().zip(MODEL_FIELDS) {
            *sum += r.get(field).ok_or_else(|| FeatureError::MissingValue {
                station: r.station_id.clone(),
                date: r.date,
                field,
            })?;
        }
        out.push(AccumulatedRecord {
            station_id: r.station_id.clone(),
            date: r.date,
            cycle_start,
            sums,
        });
    }
    Ok(out)
}

/// Converts five stage counts to ratios; `None` when nothing was counted.
pub fn counts_to_ratios(counts: [u32; 5]) -> Option<NymphStageRatios> {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total == 0 {
        return None;
    }
    let mut r = [0.0; 5];
    for (slot, c) in r.iter_mut().zip(counts) {
        *slot = c as f64 / total as f64;
    }
    // Division can leave the sum a few ulps off one; fold the residue into the largest share.
    let residue = 1.0 - r.iter().sum::<f64>();
    let largest = (0..5).max_by(|&a, &b| r[a].total_cmp(&r[b]).then(b.cmp(&a))).unwrap_or(0);
    r[largest] = (r[largest] + residue).clamp(0.0, 1.0);
    Some(NymphStageRatios(r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayLabel {
    pub phase: PhaseLabel,
    pub counts: Option<[u32; 5]>,
}

pub type LabelMap = BTreeMap<(String, NaiveDate), DayLabel>;

#[derive(Debug, Clone, Default)]
pub struct ParsedLabels {
    pub labels: LabelMap,
    pub diagnostics: Vec<String>,
}

/// Parses the label CSV (`station_id,date,phase,n1..n5`). Rows with a bad
/// phase or date are skipped with a diagnostic; partially filled counts are
/// treated as no count.
pub fn parse_labels_csv(text: &str) -> Result<ParsedLabels, FeatureError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_string())
        .collect();
    if header != LABEL_HEADER {
        return Err(FeatureError::LabelCsv(format!(
            "header must be `{}`, found `{}`",
            LABEL_HEADER.join(","),
            header.join(",")
        )));
    }

    let mut out = ParsedLabels::default();
    let mut rows = 0usize;
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.iter().all(str::is_empty) {
            continue;
        }
        rows += 1;
        if row.len() != LABEL_HEADER.len() {
            out.diagnostics
                .push(format!("line {line}: expected 8 fields, found {}", row.len()));
            continue;
        }
        let date = match NaiveDate::parse_from_str(&row[1], "%Y-%m-%d") {
            Ok(d) => d,
            Err(_) => {
                out.diagnostics.push(format!("line {line}: bad date `{}`", &row[1]));
                continue;
            }
        };
        let phase = match row[2].parse::<u8>().ok().and_then(|p| PhaseLabel::try_from(p).ok()) {
            Some(p) => p,
            None => {
                out.diagnostics.push(format!("line {line}: bad phase `{}`", &row[2]));
                continue;
            }
        };
        let cells: Vec<&str> = (3..8).map(|i| &row[i]).collect();
        let counts = if cells.iter().all(|c| c.is_empty()) {
            None
        } else {
            let parsed: Option<Vec<u32>> = cells.iter().map(|c| c.parse::<u32>().ok()).collect();
            match parsed {
                Some(v) => Some([v[0], v[1], v[2], v[3], v[4]]),
                None => {
                    out.diagnostics
                        .push(format!("line {line}: counts must be five non-negative integers"));
                    None
                }
            }
        };
        let key = (row[0].to_string(), date);
        if out.labels.insert(key, DayLabel { phase, counts }).is_some() {
            out.diagnostics
                .push(format!("line {line}: duplicate label for {} {date}; later row wins", &row[0]));
        }
    }
    if rows == 0 {
        return Err(FeatureError::LabelCsv("no data rows".into()));
    }
    Ok(out)
}

pub fn write_labels_csv(labels: &LabelMap) -> String {
    let mut out = LABEL_HEADER.join(",");
    out.push('\n');
    for ((station, date), label) in labels {
        out.push_str(&format!("{station},{},{}", date.format("%Y-%m-%d"), label.phase));
        match label.counts {
            Some(c) => {
                for n in c {
                    out.push_str(&format!(",{n}"));
                }
            }
            None => out.push_str(",,,,,"),
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub station_id: String,
    pub date: NaiveDate,
    pub features: Vec<f64>,
    pub phase: PhaseLabel,
    pub ratios: Option<NymphStageRatios>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: FeatureSetSpec,
    pub instances: Vec<LabeledInstance>,
    pub dropped_no_features: usize,
    pub dropped_no_label: usize,
}

impl Dataset {
    pub fn dropped(&self) -> usize {
        self.dropped_no_features + self.dropped_no_label
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn feature_rows(&self) -> Vec<Vec<f64>> {
        self.instances.iter().map(|i| i.features.clone()).collect()
    }

    pub fn phase_classes(&self) -> Vec<usize> {
        self.instances.iter().map(|i| i.phase.index()).collect()
    }

    /// Instances carrying nymph ratios: the regression dataset.
    pub fn regression_subset(&self) -> Dataset {
        Dataset {
            spec: self.spec.clone(),
            instances: self
                .instances
                .iter()
                .filter(|i| i.ratios.is_some())
                .cloned()
                .collect(),
            dropped_no_features: 0,
            dropped_no_label: 0,
        }
    }
}

/// Inner join of climate days and labels on (station, date).
///
/// Climate days without complete features or without a label are dropped, as
/// are labels naming a day with no climate record at all.
pub fn build_dataset(
    acc: &[AccumulatedRecord],
    raw: &[RawClimateRecord],
    labels: &LabelMap,
    spec: &FeatureSetSpec,
) -> Result<Dataset, FeatureError> {
    let acc_by_key: BTreeMap<(&str, NaiveDate), &AccumulatedRecord> = acc
        .iter()
        .map(|a| ((a.station_id.as_str(), a.date), a))
        .collect();

    let mut instances = Vec::new();
    let mut dropped_no_features = 0;
    let mut dropped_no_label = 0;
    let mut seen: BTreeSet<(&str, NaiveDate)> = BTreeSet::new();

    for r in raw {
        let key = (r.station_id.as_str(), r.date);
        seen.insert(key);
        let features = spec.extract(r, acc_by_key.get(&key).copied());
        let label = labels.get(&(r.station_id.clone(), r.date));
        match (features, label) {
            (Some(features), Some(label)) => instances.push(LabeledInstance {
                station_id: r.station_id.clone(),
                date: r.date,
                features,
                phase: label.phase,
                ratios: label.counts.and_then(counts_to_ratios),
            }),
            (None, _) => dropped_no_features += 1,
            (Some(_), None) => dropped_no_label += 1,
        }
    }
    dropped_no_features += labels
        .keys()
        .filter(|(s, d)| !seen.contains(&(s.as_str(), *d)))
        .count();

    if instances.is_empty() {
        return Err(FeatureError::EmptyDataset {
            dropped: dropped_no_features + dropped_no_label,
        });
    }
    Ok(Dataset {
        spec: spec.clone(),
        instances,
        dropped_no_features,
        dropped_no_label,
    })
}
