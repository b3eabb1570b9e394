use std::sync::OnceLock;

use chrono::{Days, NaiveDate};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sunnpest_core::bundle::{load_bundle, save_bundle, BundleError, ModelBundle};
use sunnpest_core::features::ModelId;
use sunnpest_core::ingest::{parse_climate_csv, write_climate_csv, ClimateField, RawClimateRecord};
use sunnpest_core::pipeline::{load_labels, make_dataset, prepare_climate, train_bundle, TrainingConfig};
use sunnpest_core::synth::{generate_seasons, SynthConfig};

fn record_strategy() -> impl Strategy<Value = RawClimateRecord> {
    let cell = prop_oneof![
        1 => Just(None),
        4 => (-1.0e6f64..1.0e6).prop_map(Some),
        1 => (-50i32..50).prop_map(|v| Some(v as f64)),
    ];
    (
        prop::sample::select(vec!["ST01", "north", "a-7"]),
        0u64..3000,
        prop::collection::vec(cell, 13),
    )
        .prop_map(|(station, day, cells)| {
            let date = NaiveDate::from_ymd_opt(2012, 1, 1).unwrap() + Days::new(day);
            let mut r = RawClimateRecord::empty(station, date);
            for (f, v) in ClimateField::ALL.into_iter().zip(cells) {
                r.set(f, v);
            }
            r
        })
}

proptest! {
    #[test]
    fn climate_csv_round_trips(records in prop::collection::vec(record_strategy(), 1..40)) {
        let mut records = records;
        records.sort_by(|a, b| (&a.station_id, a.date).cmp(&(&b.station_id, b.date)));
        records.dedup_by(|a, b| a.station_id == b.station_id && a.date == b.date);

        let text = write_climate_csv(&records);
        let parsed = parse_climate_csv(&text, None).unwrap();
        prop_assert_eq!(&parsed.records, &records);
        prop_assert_eq!(write_climate_csv(&parsed.records), text);
    }
}

fn bundle() -> &'static ModelBundle {
    static B: OnceLock<ModelBundle> = OnceLock::new();
    B.get_or_init(|| {
        let cfg = SynthConfig { years: 2, ..SynthConfig::default() };
        let season = generate_seasons(&cfg).unwrap();
        let climate = prepare_climate(&[("climate.csv".into(), season.climate_csv)], cfg.cycle_start, 14).unwrap();
        let labels = load_labels(&season.labels_csv).unwrap();
        let ds = make_dataset(&climate, &labels, ModelId::M2Accumulated).unwrap();
        train_bundle(&ds, &TrainingConfig::with_seed(5, cfg.cycle_start, 14)).unwrap()
    })
}

#[test]
fn saved_bundle_predicts_identically() {
    let original = bundle();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_bundle(original, &path).unwrap();
    let loaded = load_bundle(&path).unwrap();
    assert_eq!(&loaded, original);

    let m = original.feature_set.fields.len();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..120_000.0)).collect();
        assert_eq!(loaded.predict(&x).unwrap(), original.predict(&x).unwrap());
    }
    assert_eq!(loaded.to_json(), original.to_json());
}

#[test]
fn truncated_bundle_is_a_parse_error() {
    let json = bundle().to_json();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.json");
    std::fs::write(&path, &json[..json.len() / 2]).unwrap();
    assert!(matches!(load_bundle(&path), Err(BundleError::Parse { .. })));
}

#[test]
fn newer_format_version_is_rejected() {
    let mut value: serde_json::Value = serde_json::from_str(&bundle().to_json()).unwrap();
    let current = value["format_version"].as_u64().unwrap();
    value["format_version"] = (current + 1).into();
    let err = ModelBundle::from_json(&value.to_string()).unwrap_err();
    assert!(
        matches!(err, BundleError::Version { found, expected } if found == current + 1 && u64::from(expected) == current),
        "{err}"
    );
}

#[test]
fn arity_mismatch_is_refused() {
    let b = bundle();
    let n = b.feature_set.fields.len();
    assert!(b.predict(&vec![0.0; n - 1]).is_err());
    assert!(b.predict(&vec![0.0; n + 1]).is_err());
}

#[test]
fn missing_bundle_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_bundle(&dir.path().join("absent.json")), Err(BundleError::Io { .. })));
}
