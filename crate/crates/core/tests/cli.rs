use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use sunnpest_core::bundle::load_bundle;
use tempfile::TempDir;

fn sunnpest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sunnpest"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = sunnpest(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], code: i32) -> String {
    let out = sunnpest(args);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic data plus an m2 bundle trained on it, shared by the tests.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
    fn climate(&self) -> PathBuf {
        self.path("data/climate.csv")
    }
    fn labels(&self) -> PathBuf {
        self.path("data/labels.csv")
    }
    fn bundle(&self) -> PathBuf {
        self.path("m2.json")
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let f = Fixture { dir: tempfile::tempdir().unwrap() };
        ok(&["synth", "--out", s(&f.path("data")), "--years", "3", "--seed", "4"]);
        ok(&["train", "--climate", s(&f.climate()), "--labels", s(&f.labels()), "--out", s(&f.bundle())]);
        f
    })
}

/// `n` consecutive fully observed days for one station, plus labels.
fn tiny_dataset(dir: &Path, n: usize, with_counts: bool) -> (PathBuf, PathBuf) {
    let mut climate =
        String::from("station_id,date,wd_avg,ws_avg,ws_max,sr_avg,rainfall,d_min,d_avg,rh_min,rh_avg,rh_max,at_min,at_avg,at_max\n");
    let mut labels = String::from("station_id,date,phase,n1,n2,n3,n4,n5\n");
    for i in 0..n {
        let date = format!("2020-01-{:02}", i + 1);
        let t = i as f64;
        climate.push_str(&format!(
            "S1,{date},180,2,5,{},0,{},{},40,60,80,{},{},{}\n",
            150.0 + 10.0 * t,
            -2.0 + t,
            t,
            t,
            t + 5.0,
            t + 10.0
        ));
        let phase = 1 + i * 3 / n;
        if with_counts && phase == 3 {
            labels.push_str(&format!("S1,{date},{phase},1,2,3,4,{i}\n"));
        } else {
            labels.push_str(&format!("S1,{date},{phase},,,,,\n"));
        }
    }
    let (c, l) = (dir.join("climate.csv"), dir.join("labels.csv"));
    std::fs::write(&c, climate).unwrap();
    std::fs::write(&l, labels).unwrap();
    (c, l)
}

#[test]
fn help_and_usage_exit_codes() {
    ok(&["--help"]);
    fails(&["no-such-command"], 1);
    fails(&["train", "--labels", "x.csv", "--out", "y.json"], 1);
}

#[test]
fn missing_input_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = fails(
        &["train", "--climate", s(&dir.path().join("absent.csv")), "--labels", "x", "--out", "y"],
        1,
    );
    assert!(err.contains("absent.csv"), "{err}");
}

#[test]
fn more_folds_than_instances_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (c, l) = tiny_dataset(dir.path(), 9, true);
    let err = fails(&["evaluate", "--climate", s(&c), "--labels", s(&l), "--model", "m1", "--folds", "10"], 1);
    assert!(err.contains("n < k"), "{err}");
}

#[test]
fn training_without_counted_days_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (c, l) = tiny_dataset(dir.path(), 20, false);
    let out = dir.path().join("b.json");
    let err = fails(&["train", "--climate", s(&c), "--labels", s(&l), "--model", "m1", "--out", s(&out)], 1);
    assert!(err.contains("no regression instances"), "{err}");
    assert!(!out.exists());
}

#[test]
fn evaluation_prints_three_by_three_confusion() {
    let f = fixture();
    let json = f.path("eval.json");
    let table = ok(&[
        "evaluate",
        "--climate",
        s(&f.climate()),
        "--labels",
        s(&f.labels()),
        "--out",
        s(&json),
    ]);
    let header = table.lines().position(|l| l.contains("confusion")).expect("confusion block");
    let rows: Vec<&str> = table.lines().skip(header + 1).take(4).collect();
    assert_eq!(rows[0].split_whitespace().collect::<Vec<_>>(), ["phase", "1", "phase", "2", "phase", "3"]);
    for (i, row) in rows[1..].iter().enumerate() {
        let cells: Vec<&str> = row.split_whitespace().collect();
        assert_eq!(cells[..2], ["phase", &(i + 1).to_string()]);
        assert_eq!(cells.len(), 5, "{row}");
        assert!(cells[2..].iter().all(|c| c.parse::<u64>().is_ok()));
    }
    assert!(!table.lines().nth(header + 5).unwrap_or("").contains("phase 4"));

    let report: Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    let counts = &report["classification"]["confusion"]["counts"];
    assert_eq!(counts.as_array().unwrap().len(), 3);
    assert!(counts.as_array().unwrap().iter().all(|r| r.as_array().unwrap().len() == 3));
}

#[test]
fn reduced_model_bundle_has_six_features() {
    let f = fixture();
    let out = f.path("m3.json");
    ok(&["train", "--climate", s(&f.climate()), "--labels", s(&f.labels()), "--model", "m3", "--out", s(&out)]);
    let bundle = load_bundle(&out).unwrap();
    assert_eq!(
        bundle.feature_set.fields,
        ["acc_sr_avg", "acc_rainfall", "acc_rh_avg", "acc_at_min", "acc_at_avg", "acc_at_max"]
    );
    assert_eq!(bundle.phase_tree.n_features(), 6);
}

fn forecast_lines(stdout: &str) -> Vec<Value> {
    stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn early_season_day_is_phase_one_without_action() {
    let f = fixture();
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(f.path("data/truth.json")).unwrap()).unwrap();
    let day = truth["days"]
        .as_array()
        .unwrap()
        .iter()
        .min_by(|a, b| {
            let d = |v: &Value| (v["acc_sr"].as_f64().unwrap() - 40000.0).abs();
            d(a).total_cmp(&d(b))
        })
        .unwrap();
    assert!((day["acc_sr"].as_f64().unwrap() - 40000.0).abs() < 400.0);
    let date = day["date"].as_str().unwrap();
    let station = day["station_id"].as_str().unwrap();
    let stdout = ok(&["predict", "--bundle", s(&f.bundle()), "--climate", s(&f.climate()), "--from", date, "--to", date]);
    let hit = forecast_lines(&stdout)
        .into_iter()
        .find(|r| r["station_id"] == station)
        .expect("forecast for the station");
    assert_eq!(hit["phase"], 1);
    assert_eq!(hit["warning"], "NoAction");
}

#[test]
fn predictions_reproduce_training_labels() {
    let f = fixture();
    let labels = std::fs::read_to_string(f.labels()).unwrap();
    let truth: BTreeMap<(String, String), u64> = labels
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            ((c[0].to_string(), c[1].to_string()), c[2].parse().unwrap())
        })
        .collect();
    let stdout = ok(&["predict", "--bundle", s(&f.bundle()), "--climate", s(&f.climate())]);
    let rows = forecast_lines(&stdout);
    assert_eq!(rows.len(), truth.len());
    for r in rows {
        let key = (r["station_id"].as_str().unwrap().to_string(), r["date"].as_str().unwrap().to_string());
        assert_eq!(r["phase"].as_u64(), truth.get(&key).copied(), "{key:?}");
    }
}

#[test]
fn out_of_range_forecast_is_an_input_error() {
    let f = fixture();
    let err = fails(
        &["predict", "--bundle", s(&f.bundle()), "--climate", s(&f.climate()), "--from", "2030-01-01", "--to", "2030-01-05"],
        1,
    );
    assert!(err.contains("no climate days"), "{err}");
}

#[test]
fn dot_export_matches_model_structure() {
    let f = fixture();
    let bundle = load_bundle(&f.bundle()).unwrap();
    let dot_path = f.path("phase.dot");
    ok(&["export-dot", "--bundle", s(&f.bundle()), "--out", s(&dot_path)]);
    let dot = std::fs::read_to_string(&dot_path).unwrap();
    let tree = &bundle.phase_tree;

    let nodes: Vec<&str> = dot.lines().map(str::trim).filter(|l| l.starts_with('n') && !l.contains("->") && l.contains("[label")).collect();
    assert_eq!(nodes.len(), tree.node_count());
    let mut out_edges = vec![0usize; tree.node_count()];
    for l in dot.lines().filter(|l| l.contains("->")) {
        let from: usize = l.trim().trim_start_matches('n').split_whitespace().next().unwrap().parse().unwrap();
        out_edges[from] += 1;
    }
    let internal = tree.node_count() - tree.leaf_count();
    assert_eq!(out_edges.iter().filter(|&&e| e == 2).count(), internal);
    assert!(out_edges.iter().all(|&e| e == 0 || e == 2));

    for l in nodes.iter().filter(|l| l.contains('≤')) {
        let thr = l.split('≤').nth(1).unwrap().trim().trim_end_matches("\"];");
        let digits = thr.chars().filter(char::is_ascii_digit).collect::<String>();
        assert!(digits.trim_start_matches('0').len() <= 6, "{thr}");
    }

    let stage_path = f.path("stage2.dot");
    ok(&["export-dot", "--bundle", s(&f.bundle()), "--which", "2", "--tree-index", "3", "--out", s(&stage_path)]);
    fails(&["export-dot", "--bundle", s(&f.bundle()), "--which", "2", "--tree-index", "99", "--out", s(&stage_path)], 1);
}

#[test]
fn custom_warning_rule_is_echoed() {
    let f = fixture();
    let stdout = ok(&[
        "predict",
        "--bundle",
        s(&f.bundle()),
        "--climate",
        s(&f.climate()),
        "--from",
        "2016-06-01",
        "--to",
        "2016-06-01",
        "--warn-stages",
        "3,4",
        "--warn-threshold",
        "0.4",
        "--ignore-phase",
    ]);
    for r in forecast_lines(&stdout) {
        assert_eq!(r["rule"]["watched_stages"], serde_json::json!([3, 4]));
        assert_eq!(r["rule"]["require_phase3"], false);
        let mass = r["ratios"][2].as_f64().unwrap() + r["ratios"][3].as_f64().unwrap();
        assert_eq!(mass >= 0.4, r["warning"] == "SprayWindow", "{r}");
    }
    fails(&["predict", "--bundle", s(&f.bundle()), "--climate", s(&f.climate()), "--warn-stages", "7"], 1);
}
