//! Seeded generator of labeled synthetic seasons.
//!
//! Labels come from oracles applied to noiseless signals; only the emitted
//! sensor observations carry noise and gaps.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{Datelike, Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{write_labels_csv, DayLabel, LabelMap, NymphStageRatios, PhaseLabel, SeasonClock};
use crate::ingest::{write_climate_csv, RawClimateRecord};
use crate::tree::mix64;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

/// Standard deviations of the observation noise added to each sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScales {
    pub sr: f64,
    pub temperature: f64,
    pub humidity: f64,
    pub wind_speed: f64,
    pub wind_direction: f64,
    pub rainfall: f64,
    pub dew_point: f64,
}

impl Default for NoiseScales {
    fn default() -> Self {
        NoiseScales {
            sr: 25.0,
            temperature: 1.5,
            humidity: 5.0,
            wind_speed: 0.6,
            wind_direction: 20.0,
            rainfall: 1.0,
            dew_point: 1.5,
        }
    }
}

impl NoiseScales {
    fn all(&self) -> [f64; 7] {
        [
            self.sr,
            self.temperature,
            self.humidity,
            self.wind_speed,
            self.wind_direction,
            self.rainfall,
            self.dew_point,
        ]
    }

    pub fn zero() -> Self {
        NoiseScales {
            sr: 0.0,
            temperature: 0.0,
            humidity: 0.0,
            wind_speed: 0.0,
            wind_direction: 0.0,
            rainfall: 0.0,
            dew_point: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub years: u32,
    pub stations: u32,
    pub rng_seed: u64,
    pub start_year: i32,
    pub cycle_start: SeasonClock,
    /// Accumulated SR below which the phase is 1.
    pub t1: f64,
    /// Accumulated SR above which the phase is 3.
    pub t2: f64,
    pub noise: NoiseScales,
    /// Relative spread of the per station-year SR level.
    pub sr_level_spread: f64,
    /// Days after phase-3 onset during which nymphs are counted; stage centers
    /// are spaced evenly over this window.
    pub nymph_window_days: u32,
    /// Width of each stage's bell, in days.
    pub stage_spread_days: f64,
    pub nymphs_per_count: u32,
    /// Fraction of days whose sensor readings are blanked.
    pub missing_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            years: 4,
            stations: 2,
            rng_seed: 1,
            start_year: 2015,
            cycle_start: SeasonClock::default(),
            t1: 44533.0,
            t2: 57912.0,
            noise: NoiseScales::default(),
            sr_level_spread: 0.04,
            nymph_window_days: 60,
            stage_spread_days: 8.0,
            nymphs_per_count: 300,
            missing_rate: 0.02,
        }
    }
}

/// Longest run of blanked days the generator injects.
pub const MAX_INJECTED_RUN: usize = 5;

impl SynthConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.into()));
        if self.years == 0 || self.stations == 0 {
            return bad("years and stations must be positive");
        }
        if !(self.t1 > 0.0 && self.t1 < self.t2 && self.t2.is_finite()) {
            return bad("thresholds must satisfy 0 < t1 < t2");
        }
        if self.noise.all().iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("noise scales must be finite and non-negative");
        }
        if !(0.0..=0.2).contains(&self.missing_rate) {
            return bad("missing rate must lie in [0, 0.2]");
        }
        if !(0.0..0.5).contains(&self.sr_level_spread) {
            return bad("SR level spread must lie in [0, 0.5)");
        }
        if self.nymph_window_days < 4 || self.stage_spread_days.is_nan() || self.stage_spread_days <= 0.0 {
            return bad("nymph window must be at least 4 days with a positive stage spread");
        }
        if self.nymphs_per_count == 0 {
            return bad("nymphs per count must be positive");
        }
        if NaiveDate::from_ymd_opt(self.start_year, 1, 1).is_none()
            || NaiveDate::from_ymd_opt(self.start_year + self.years as i32, 1, 1).is_none()
        {
            return bad("year range out of calendar bounds");
        }
        Ok(())
    }
}

/// Phase implied by noiseless accumulated SR.
pub fn phase_oracle(acc_sr: f64, cfg: &SynthConfig) -> PhaseLabel {
    if acc_sr < cfg.t1 {
        PhaseLabel::WinterQuarters
    } else if acc_sr > cfg.t2 {
        PhaseLabel::WheatField
    } else {
        PhaseLabel::Migration
    }
}

/// Stage composition `days` after phase-3 onset: five bells centered evenly
/// over the nymph window, normalized.
pub fn nymph_ratio_oracle(days: u32, cfg: &SynthConfig) -> NymphStageRatios {
    let step = cfg.nymph_window_days as f64 / 4.0;
    let mut w = [0.0; 5];
    for (k, slot) in w.iter_mut().enumerate() {
        let z = (days as f64 - k as f64 * step) / cfg.stage_spread_days;
        *slot = (-0.5 * z * z).exp();
    }
    // Far past the window every bell underflows; the oldest stage takes it all.
    let total: f64 = w.iter().sum();
    if total == 0.0 || !total.is_finite() {
        return NymphStageRatios::new([0.0, 0.0, 0.0, 0.0, 1.0]).expect("valid");
    }
    let mut r = w.map(|v| v / total);
    let residue = 1.0 - r.iter().sum::<f64>();
    let largest = (0..5).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap_or(0);
    r[largest] += residue;
    NymphStageRatios::new(r).expect("normalized bells")
}

/// Integer counts summing to `total`, apportioned by largest remainder.
fn apportion(ratios: &NymphStageRatios, total: u32) -> [u32; 5] {
    let exact = ratios.as_array().map(|r| r * total as f64);
    let mut counts = exact.map(|v| v.floor() as u32);
    let mut left = total - counts.iter().sum::<u32>();
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for i in order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDay {
    pub station_id: String,
    pub date: NaiveDate,
    pub phase: PhaseLabel,
    pub acc_sr: f64,
    pub days_since_phase3: Option<u32>,
    /// Set only on counted days.
    pub ratios: Option<NymphStageRatios>,
    /// Sensor values before noise and gaps.
    pub clean: RawClimateRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedGap {
    pub station_id: String,
    pub first: NaiveDate,
    pub last: NaiveDate,
}

impl InjectedGap {
    pub fn days(&self) -> usize {
        (self.last - self.first).num_days() as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub days: Vec<TruthDay>,
    pub gaps: Vec<InjectedGap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSeason {
    pub climate_csv: String,
    pub labels_csv: String,
    pub truth: SynthTruth,
}

pub fn station_name(i: u32) -> String {
    format!("ST{:02}", i + 1)
}

fn clipped_noise(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    let n = Normal::new(0.0, sd).expect("finite sd");
    n.sample(rng).clamp(-2.5 * sd, 2.5 * sd)
}

fn wave(doy: u32, phase_day: f64) -> f64 {
    (2.0 * PI * (doy as f64 - phase_day) / 365.25).sin()
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

#[derive(Debug, Clone, Copy)]
struct YearLevels {
    sr_scale: f64,
    temp_offset: f64,
    humidity_offset: f64,
}

/// Noiseless sensor values for one day.
fn clean_day(station: &str, date: NaiveDate, lv: YearLevels) -> RawClimateRecord {
    let doy = date.ordinal();
    let sr = lv.sr_scale * (420.0 + 220.0 * wave(doy, 81.0));
    let at = 12.0 + lv.temp_offset + 12.0 * wave(doy, 110.0);
    let rh = (60.0 + lv.humidity_offset - 20.0 * wave(doy, 110.0)).clamp(5.0, 95.0);
    let ws = 2.5 + wave(doy, 30.0);
    let rain = (1.5 - 1.5 * wave(doy, 105.0)).max(0.0);
    let dew = at - (100.0 - rh) / 5.0;
    let mut r = RawClimateRecord::empty(station, date);
    r.wd_avg = Some(200.0 + 40.0 * wave(doy, 0.0));
    r.ws_avg = Some(ws);
    r.ws_max = Some(ws + 4.0);
    r.sr_avg = Some(sr);
    r.rainfall = Some(rain);
    r.d_min = Some(dew - 2.5);
    r.d_avg = Some(dew);
    r.rh_min = Some((rh - 15.0).max(0.0));
    r.rh_avg = Some(rh);
    r.rh_max = Some((rh + 15.0).min(100.0));
    r.at_min = Some(at - 6.0);
    r.at_avg = Some(at);
    r.at_max = Some(at + 7.0);
    r
}

/// Noisy observation of a clean day. Spreads around each average are kept
/// positive so every ordering constraint of the schema holds.
fn observe(clean: &RawClimateRecord, noise: &NoiseScales, rng: &mut ChaCha8Rng) -> RawClimateRecord {
    let v = |x: Option<f64>| x.expect("clean day is complete");
    let mut r = RawClimateRecord::empty(clean.station_id.clone(), clean.date);

    let at = v(clean.at_avg) + clipped_noise(rng, noise.temperature);
    let at_lo = v(clean.at_avg) - v(clean.at_min) + clipped_noise(rng, noise.temperature * 0.2).abs();
    let at_hi = v(clean.at_max) - v(clean.at_avg) + clipped_noise(rng, noise.temperature * 0.2).abs();
    let rh = (v(clean.rh_avg) + clipped_noise(rng, noise.humidity)).clamp(0.0, 100.0);
    let ws = (v(clean.ws_avg) + clipped_noise(rng, noise.wind_speed)).max(0.0);
    let gust = v(clean.ws_max) - v(clean.ws_avg) + clipped_noise(rng, noise.wind_speed).abs();
    let dew = v(clean.d_avg) + clipped_noise(rng, noise.dew_point);
    let dew_lo = v(clean.d_avg) - v(clean.d_min) + clipped_noise(rng, noise.dew_point * 0.2).abs();

    r.wd_avg = Some(round2((v(clean.wd_avg) + clipped_noise(rng, noise.wind_direction)).rem_euclid(360.0)) % 360.0);
    r.ws_avg = Some(round2(ws));
    r.ws_max = Some(round2(ws + gust));
    r.sr_avg = Some(round2((v(clean.sr_avg) + clipped_noise(rng, noise.sr)).max(0.0)));
    r.rainfall = Some(round2((v(clean.rainfall) + clipped_noise(rng, noise.rainfall)).max(0.0)));
    r.d_avg = Some(round2(dew));
    r.d_min = Some(round2(dew - dew_lo));
    r.rh_avg = Some(round2(rh));
    r.rh_min = Some(round2((rh - 15.0).max(0.0)));
    r.rh_max = Some(round2((rh + 15.0).min(100.0)));
    r.at_avg = Some(round2(at));
    r.at_min = Some(round2(at - at_lo));
    r.at_max = Some(round2(at + at_hi));
    r
}

/// Chooses blank runs of 1..=MAX_INJECTED_RUN days, never on the first or
/// last day and never touching another run.
fn choose_gaps(n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let target = (rate * n as f64).round() as usize;
    let mut blank = vec![false; n];
    let mut runs = Vec::new();
    let mut blanked = 0;
    let mut attempts = 0;
    while blanked < target && attempts < 100 * n.max(1) && n > MAX_INJECTED_RUN + 2 {
        attempts += 1;
        let len = rng.random_range(1..=MAX_INJECTED_RUN).min(target - blanked);
        let start = rng.random_range(1..n - len);
        let (lo, hi) = (start - 1, start + len);
        if blank[lo..=hi].iter().any(|&b| b) {
            continue;
        }
        blank[start..start + len].iter_mut().for_each(|b| *b = true);
        runs.push((start, start + len - 1));
        blanked += len;
    }
    runs.sort_unstable();
    runs
}

struct StationOutput {
    observed: Vec<RawClimateRecord>,
    truth: Vec<TruthDay>,
    gaps: Vec<InjectedGap>,
}

fn generate_station(cfg: &SynthConfig, index: u32) -> StationOutput {
    let station = station_name(index);
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(cfg.rng_seed ^ mix64(0x5e7d_0000 + index as u64)));
    let first = NaiveDate::from_ymd_opt(cfg.start_year, 1, 1).expect("validated");
    let end = NaiveDate::from_ymd_opt(cfg.start_year + cfg.years as i32, 1, 1).expect("validated");

    let mut levels = BTreeMap::new();
    for y in 0..cfg.years as i32 {
        let u: f64 = rng.random_range(-1.0..=1.0);
        levels.insert(
            cfg.start_year + y,
            YearLevels {
                sr_scale: 1.0 + cfg.sr_level_spread * u,
                temp_offset: rng.random_range(-1.5..=1.5),
                humidity_offset: rng.random_range(-5.0..=5.0),
            },
        );
    }

    let mut truth = Vec::new();
    let mut observed = Vec::new();
    let mut acc = 0.0;
    let mut cycle = None;
    let mut onset: Option<NaiveDate> = None;
    let mut date = first;
    while date < end {
        let clean = clean_day(&station, date, levels[&date.year()]);
        let this_cycle = cfg.cycle_start.cycle_start_for(date);
        if cycle != Some(this_cycle) {
            cycle = Some(this_cycle);
            acc = 0.0;
            onset = None;
        }
        acc += clean.sr_avg.expect("complete");
        let phase = phase_oracle(acc, cfg);
        if phase == PhaseLabel::WheatField && onset.is_none() {
            onset = Some(date);
        }
        let days_since = onset.map(|o| (date - o).num_days() as u32);
        let ratios = days_since
            .filter(|&d| d <= cfg.nymph_window_days)
            .map(|d| nymph_ratio_oracle(d, cfg));
        observed.push(observe(&clean, &cfg.noise, &mut rng));
        truth.push(TruthDay {
            station_id: station.clone(),
            date,
            phase,
            acc_sr: acc,
            days_since_phase3: days_since,
            ratios,
            clean,
        });
        date = date + Days::new(1);
    }

    let runs = choose_gaps(observed.len(), cfg.missing_rate, &mut rng);
    let mut gaps = Vec::with_capacity(runs.len());
    for &(a, b) in &runs {
        for r in &mut observed[a..=b] {
            *r = RawClimateRecord::empty(r.station_id.clone(), r.date);
        }
        gaps.push(InjectedGap {
            station_id: station.clone(),
            first: observed[a].date,
            last: observed[b].date,
        });
    }
    StationOutput { observed, truth, gaps }
}

/// Generates every station's series. Output depends only on `cfg`.
pub fn generate_seasons(cfg: &SynthConfig) -> Result<SynthSeason, SynthError> {
    cfg.validate()?;
    let outputs: Vec<StationOutput> = (0..cfg.stations)
        .into_par_iter()
        .map(|i| generate_station(cfg, i))
        .collect();

    let mut observed = Vec::new();
    let mut days = Vec::new();
    let mut gaps = Vec::new();
    let mut labels = LabelMap::new();
    for out in outputs {
        for t in &out.truth {
            labels.insert(
                (t.station_id.clone(), t.date),
                DayLabel {
                    phase: t.phase,
                    counts: t.ratios.map(|r| apportion(&r, cfg.nymphs_per_count)),
                },
            );
        }
        observed.extend(out.observed);
        days.extend(out.truth);
        gaps.extend(out.gaps);
    }
    Ok(SynthSeason {
        climate_csv: write_climate_csv(&observed),
        labels_csv: write_labels_csv(&labels),
        truth: SynthTruth { days, gaps },
    })
}
