//! End-to-end steps shared by the command line and the C interface.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::bundle::{dataset_digest, ModelBundle, TrainingMetadata, FORMAT_VERSION};
use crate::features::{
    accumulate_season, build_dataset, drop_incomplete, parse_labels_csv, AccumulatedRecord, Dataset,
    FeatureSetSpec, ModelId, NymphStageRatios, ParsedLabels, PhaseLabel, SeasonClock,
};
use crate::ingest::{parse_climate_csv, repair_all, GapReport, ParseDiagnostic, RawClimateRecord, Violation};
use crate::tree::{train_tree, RatioPredictor, Target, TrainParams};
use crate::warning::{warning_decision, WarningRule, WarningStatus};
use crate::Error;

/// Climate data after parsing, repair, filtering and accumulation.
#[derive(Debug, Clone, Default)]
pub struct PreparedClimate {
    /// Repaired contiguous series, all stations, sorted by (station, date).
    pub series: Vec<RawClimateRecord>,
    /// Days of `series` with every model field present.
    pub complete: Vec<RawClimateRecord>,
    pub accumulated: Vec<AccumulatedRecord>,
    pub incomplete_days: Vec<(String, NaiveDate)>,
    pub diagnostics: Vec<(String, ParseDiagnostic)>,
    pub gap_reports: Vec<GapReport>,
    pub violations: Vec<(String, NaiveDate, Violation)>,
}

/// Parses every `(source name, csv text)` pair, then repairs and accumulates
/// the union. Duplicate station-days across files keep the first occurrence.
pub fn prepare_climate(sources: &[(String, String)], clock: SeasonClock, max_gap: usize) -> Result<PreparedClimate, Error> {
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for (name, text) in sources {
        let parsed = parse_climate_csv(text, None).map_err(|source| Error::Climate {
            path: name.clone(),
            source,
        })?;
        records.extend(parsed.records);
        diagnostics.extend(parsed.diagnostics.into_iter().map(|d| (name.clone(), d)));
    }
    // Stable sort keeps file order among duplicates; repair keeps the first.
    records.sort_by(|a, b| (&a.station_id, a.date).cmp(&(&b.station_id, b.date)));
    let repaired = repair_all(records, max_gap);
    let series: Vec<RawClimateRecord> = repaired.stations.into_values().flatten().collect();
    let (complete, incomplete_days) = drop_incomplete(series.clone());
    let accumulated = accumulate_season(&complete, clock)?;
    Ok(PreparedClimate {
        series,
        complete,
        accumulated,
        incomplete_days,
        diagnostics,
        gap_reports: repaired.gap_reports,
        violations: repaired.violations,
    })
}

pub fn load_labels(text: &str) -> Result<ParsedLabels, Error> {
    Ok(parse_labels_csv(text)?)
}

pub fn make_dataset(climate: &PreparedClimate, labels: &ParsedLabels, model: ModelId) -> Result<Dataset, Error> {
    let spec = FeatureSetSpec::for_model(model);
    Ok(build_dataset(&climate.accumulated, &climate.series, &labels.labels, &spec)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub classifier: TrainParams,
    pub forest: TrainParams,
    pub clock: SeasonClock,
    pub max_gap: usize,
}

impl TrainingConfig {
    pub fn with_seed(seed: u64, clock: SeasonClock, max_gap: usize) -> Self {
        TrainingConfig {
            classifier: TrainParams::classifier_defaults().with_seed(seed),
            forest: TrainParams::forest_defaults().with_seed(seed),
            clock,
            max_gap,
        }
    }
}

/// Trains the phase tree on every instance and the stage forests on the
/// counted ones.
pub fn train_bundle(ds: &Dataset, cfg: &TrainingConfig) -> Result<ModelBundle, Error> {
    let reg = ds.regression_subset();
    if reg.is_empty() {
        return Err(Error::NoRegressionInstances);
    }
    let x = ds.feature_rows();
    let y = ds.phase_classes();
    let phase_tree = train_tree(
        &x,
        Target::Classes {
            labels: &y,
            n_classes: 3,
        },
        &ds.spec.fields,
        &cfg.classifier,
    )?;
    let rx = reg.feature_rows();
    let ry: Vec<NymphStageRatios> = reg.instances.iter().map(|i| i.ratios.expect("counted")).collect();
    let ratio_predictor = RatioPredictor::train(&rx, &ry, &ds.spec.fields, &cfg.forest)?;

    let mut stations: Vec<String> = ds.instances.iter().map(|i| i.station_id.clone()).collect();
    stations.sort();
    stations.dedup();
    let metadata = TrainingMetadata {
        dataset_digest: dataset_digest(ds),
        instances: ds.len(),
        regression_instances: reg.len(),
        dropped_no_features: ds.dropped_no_features,
        dropped_no_label: ds.dropped_no_label,
        stations,
        first_date: ds.instances.iter().map(|i| i.date).min().expect("non-empty"),
        last_date: ds.instances.iter().map(|i| i.date).max().expect("non-empty"),
        max_gap: cfg.max_gap,
    };
    let bundle = ModelBundle {
        format_version: FORMAT_VERSION,
        feature_set: ds.spec.clone(),
        season_clock: cfg.clock,
        classifier_params: cfg.classifier,
        forest_params: cfg.forest,
        rng_seed: cfg.forest.rng_seed,
        metadata,
        phase_tree,
        ratio_predictor,
    };
    bundle.check().map_err(|e| Error::Internal(e.to_string()))?;
    Ok(bundle)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyForecast {
    pub station_id: String,
    pub date: NaiveDate,
    pub phase: PhaseLabel,
    pub phase_distribution: [f64; 3],
    pub ratios: NymphStageRatios,
    /// Every stage forest predicted zero; `ratios` is a placeholder.
    pub ratios_degenerate: bool,
    pub warning: WarningStatus,
    pub rule: WarningRule,
}

/// Days in range that could not be forecast, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedDay {
    pub station_id: String,
    pub date: NaiveDate,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRun {
    pub forecasts: Vec<DailyForecast>,
    pub skipped: Vec<SkippedDay>,
}

/// Earliest day whose season start lies inside a series beginning on `first`.
fn earliest_usable(clock: SeasonClock, first: NaiveDate) -> NaiveDate {
    clock.next_cycle_start(first)
}

/// Forecasts every station-day of `climate` within `[from, to]`, ordered by
/// station then date. Accumulated models need the season start of each
/// requested day inside the data.
pub fn forecast(
    bundle: &ModelBundle,
    climate: &PreparedClimate,
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
    rule: &WarningRule,
) -> Result<ForecastRun, Error> {
    rule.validate().map_err(Error::Invalid)?;
    let spec = &bundle.feature_set;
    let in_range = |d: NaiveDate| from.is_none_or(|f| d >= f) && to.is_none_or(|t| d <= t);

    let mut first_day: BTreeMap<&str, NaiveDate> = BTreeMap::new();
    for r in &climate.series {
        first_day.entry(r.station_id.as_str()).or_insert(r.date);
    }
    if !climate.series.iter().any(|r| in_range(r.date)) {
        return Err(Error::EmptyRange);
    }

    // Accumulation is rebuilt here so the bundle's season start applies.
    let accumulated = if spec.model_id.is_accumulated() {
        accumulate_season(&climate.complete, bundle.season_clock)?
    } else {
        Vec::new()
    };
    let acc: BTreeMap<(&str, NaiveDate), &AccumulatedRecord> = accumulated
        .iter()
        .map(|a| ((a.station_id.as_str(), a.date), a))
        .collect();

    let mut forecasts = Vec::new();
    let mut skipped = Vec::new();
    for r in climate.series.iter().filter(|r| in_range(r.date)) {
        if spec.model_id.is_accumulated() {
            let first = first_day[r.station_id.as_str()];
            if bundle.season_clock.cycle_start_for(r.date) < first {
                let earliest = earliest_usable(bundle.season_clock, first);
                if from.is_some() {
                    return Err(Error::InsufficientHistory {
                        station: r.station_id.clone(),
                        earliest,
                    });
                }
                // Without an explicit start, leading days before the first
                // complete season are skipped.
                skipped.push(SkippedDay {
                    station_id: r.station_id.clone(),
                    date: r.date,
                    reason: format!("season start not covered; earliest usable date is {earliest}"),
                });
                continue;
            }
        }
        let key = (r.station_id.as_str(), r.date);
        let Some(features) = spec.extract(r, acc.get(&key).copied()) else {
            skipped.push(SkippedDay {
                station_id: r.station_id.clone(),
                date: r.date,
                reason: "missing sensor values".into(),
            });
            continue;
        };
        let p = bundle.predict(&features)?;
        forecasts.push(DailyForecast {
            station_id: r.station_id.clone(),
            date: r.date,
            phase: p.phase,
            phase_distribution: p.phase_distribution,
            ratios: p.ratios.ratios,
            ratios_degenerate: p.ratios.degenerate,
            warning: warning_decision(p.phase, &p.ratios.ratios, rule),
            rule: rule.clone(),
        });
    }
    if forecasts.is_empty() {
        if let Some(first) = skipped.first() {
            if spec.model_id.is_accumulated() && first.reason.starts_with("season start") {
                let station_first = first_day[first.station_id.as_str()];
                let earliest = earliest_usable(bundle.season_clock, station_first);
                if climate.series.iter().any(|r| r.station_id == first.station_id && r.date >= earliest) {
                    return Err(Error::InsufficientHistory {
                        station: first.station_id.clone(),
                        earliest,
                    });
                }
                return Err(Error::NoUsableHistory {
                    station: first.station_id.clone(),
                });
            }
        }
    }
    Ok(ForecastRun { forecasts, skipped })
}
