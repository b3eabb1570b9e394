use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;
use std::sync::OnceLock;

use sunnpest_core::bundle::{save_bundle, ModelBundle};
use sunnpest_core::features::{ModelId, SeasonClock};
use sunnpest_core::pipeline::{load_labels, make_dataset, prepare_climate, train_bundle, TrainingConfig};
use sunnpest_core::synth::{generate_seasons, SynthConfig};
use sunnpest_ffi::*;

struct Fixture {
    _dir: tempfile::TempDir,
    path: PathBuf,
    bundle: ModelBundle,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = SynthConfig {
            years: 1,
            stations: 1,
            ..SynthConfig::default()
        };
        let s = generate_seasons(&cfg).unwrap();
        let climate = prepare_climate(&[("c".into(), s.climate_csv)], SeasonClock::default(), 14).unwrap();
        let labels = load_labels(&s.labels_csv).unwrap();
        let ds = make_dataset(&climate, &labels, ModelId::M3AccumulatedReduced).unwrap();
        let bundle = train_bundle(&ds, &TrainingConfig::with_seed(3, SeasonClock::default(), 14)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bundle.json");
        save_bundle(&bundle, &path).unwrap();
        Fixture { _dir: dir, path, bundle }
    })
}

fn load(path: &std::path::Path) -> (SpStatus, *mut SpBundle) {
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { sp_bundle_load(c.as_ptr(), &mut out) };
    (status, out)
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(sp_last_error_message()) }.to_str().unwrap().to_owned()
}

#[test]
fn load_and_describe() {
    let f = fixture();
    let (status, b) = load(&f.path);
    assert_eq!(status, SpStatus::Ok);
    assert!(!b.is_null());
    let mut n = 0;
    assert_eq!(unsafe { sp_bundle_feature_count(b, &mut n) }, SpStatus::Ok);
    assert_eq!(n, 6);
    let mut buf = [0 as std::ffi::c_char; 64];
    let mut needed = 0;
    for (i, want) in f.bundle.feature_set.fields.iter().enumerate() {
        let st = unsafe { sp_bundle_feature_name(b, i, buf.as_mut_ptr(), buf.len(), &mut needed) };
        assert_eq!(st, SpStatus::Ok);
        assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), want);
        assert_eq!(needed, want.len());
    }
    let st = unsafe { sp_bundle_feature_name(b, 0, buf.as_mut_ptr(), 3, &mut needed) };
    assert_eq!(st, SpStatus::BufferTooSmall);
    assert_eq!(needed, "acc_sr_avg".len());
    let st = unsafe { sp_bundle_feature_name(b, 99, buf.as_mut_ptr(), buf.len(), ptr::null_mut()) };
    assert_eq!(st, SpStatus::InvalidArgument);
    unsafe { sp_bundle_free(b) };
}

#[test]
fn predictions_match_core() {
    let f = fixture();
    let (_, b) = load(&f.path);
    for k in 0..200 {
        let x: Vec<f64> = (0..6).map(|j| ((k * 7 + j * 13) % 100) as f64 * 900.0).collect();
        let want = f.bundle.predict(&x).unwrap();
        let (mut phase, mut dist) = (0u8, [0.0; 3]);
        assert_eq!(unsafe { sp_predict_phase(b, x.as_ptr(), 6, &mut phase, dist.as_mut_ptr()) }, SpStatus::Ok);
        assert_eq!(phase, want.phase.number());
        assert_eq!(dist, want.phase_distribution);
        let (mut ratios, mut degenerate) = ([0.0; 5], true);
        assert_eq!(
            unsafe { sp_predict_ratios(b, x.as_ptr(), 6, ratios.as_mut_ptr(), &mut degenerate) },
            SpStatus::Ok
        );
        assert_eq!(&ratios, want.ratios.ratios.as_array());
        assert_eq!(degenerate, want.ratios.degenerate);
    }
    unsafe { sp_bundle_free(b) };
}

#[test]
fn prediction_errors() {
    let f = fixture();
    let (_, b) = load(&f.path);
    let x = [0.0; 7];
    let (mut phase, mut dist) = (0u8, [0.0; 3]);
    assert_eq!(
        unsafe { sp_predict_phase(b, x.as_ptr(), 7, &mut phase, dist.as_mut_ptr()) },
        SpStatus::ArityMismatch
    );
    assert!(last_error().contains('6'), "{}", last_error());
    let bad = [f64::NAN; 6];
    assert_eq!(
        unsafe { sp_predict_phase(b, bad.as_ptr(), 6, &mut phase, dist.as_mut_ptr()) },
        SpStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { sp_predict_phase(ptr::null(), x.as_ptr(), 6, &mut phase, dist.as_mut_ptr()) },
        SpStatus::NullPointer
    );
    assert_eq!(
        unsafe { sp_predict_ratios(b, x.as_ptr(), 6, ptr::null_mut(), ptr::null_mut()) },
        SpStatus::NullPointer
    );
    let mut n = 0;
    assert_eq!(unsafe { sp_bundle_feature_count(b, &mut n) }, SpStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe { sp_bundle_free(b) };
    unsafe { sp_bundle_free(ptr::null_mut()) };
}

#[test]
fn load_errors() {
    let f = fixture();
    let (st, out) = load(std::path::Path::new("/nonexistent/bundle.json"));
    assert_eq!(st, SpStatus::Io);
    assert!(out.is_null());

    let text = std::fs::read_to_string(&f.path).unwrap();
    let truncated = &text[..text.len() / 2];
    let mut out = ptr::null_mut();
    let st = unsafe { sp_bundle_from_json(truncated.as_ptr().cast(), truncated.len(), &mut out) };
    assert_eq!(st, SpStatus::Parse);
    assert!(out.is_null());
    assert!(last_error().contains("line"));

    let bumped = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
    let st = unsafe { sp_bundle_from_json(bumped.as_ptr().cast(), bumped.len(), &mut out) };
    assert_eq!(st, SpStatus::Version);

    let st = unsafe { sp_bundle_from_json(text.as_ptr().cast(), text.len(), &mut out) };
    assert_eq!(st, SpStatus::Ok);
    unsafe { sp_bundle_free(out) };

    assert_eq!(unsafe { sp_bundle_load(ptr::null(), &mut out) }, SpStatus::NullPointer);
}

#[test]
fn warnings_and_intervals() {
    let mut w = SpWarning::NoAction;
    let peak = [0.0, 0.3, 0.3, 0.2, 0.2];
    assert_eq!(unsafe { sp_warning_decision(3, peak.as_ptr(), 0b110, 0.55, true, &mut w) }, SpStatus::Ok);
    assert_eq!(w, SpWarning::SprayWindow);
    assert_eq!(unsafe { sp_warning_decision(1, peak.as_ptr(), 0b110, 0.55, true, &mut w) }, SpStatus::Ok);
    assert_eq!(w, SpWarning::NoAction);
    let rising = [0.6, 0.2, 0.1, 0.1, 0.0];
    assert_eq!(unsafe { sp_warning_decision(3, rising.as_ptr(), 0b110, 0.55, true, &mut w) }, SpStatus::Ok);
    assert_eq!(w, SpWarning::Watch);
    assert_eq!(
        unsafe { sp_warning_decision(4, peak.as_ptr(), 0b110, 0.55, true, &mut w) },
        SpStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { sp_warning_decision(3, peak.as_ptr(), 0, 0.55, true, &mut w) },
        SpStatus::InvalidArgument
    );

    let mut ci = SpInterval { lower: 0.0, upper: 0.0 };
    assert_eq!(unsafe { sp_ci_proportion(1.0 - 0.863932, 2925, 0.99, &mut ci) }, SpStatus::Ok);
    assert!((ci.lower - 0.1197).abs() <= 5e-4 && (ci.upper - 0.1524).abs() <= 5e-4);
    assert_eq!(unsafe { sp_ci_proportion(0.1, 10, 1.0, &mut ci) }, SpStatus::InvalidArgument);
    let v = [0.0, 1.0];
    assert_eq!(unsafe { sp_ci_mean(v.as_ptr(), 2, 0.95, &mut ci) }, SpStatus::Ok);
    assert!((ci.upper - 6.853).abs() < 1e-3);
    assert_eq!(unsafe { sp_ci_mean(v.as_ptr(), 1, 0.95, &mut ci) }, SpStatus::InvalidArgument);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(sp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// Compiles a C program against the generated header and static library.
#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler found");
        return;
    }
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libsunnpest_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).arg(&fixture().path).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("features=6"), "{stdout}");
    let field = |key: &str| -> f64 {
        let rest = &stdout[stdout.find(key).unwrap() + key.len()..];
        rest.split_whitespace().next().unwrap().parse().unwrap()
    };
    assert!((field("lower=") - 0.0036).abs() <= 5e-4, "{stdout}");
    assert!((field("upper=") - 0.0120).abs() <= 5e-4, "{stdout}");
}
