use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pedradar_core::data::MotionClass;
use pedradar_core::eval::ClassificationReport;
use serde_json::Value;

fn pedradar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pedradar")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pedradar(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small motion study written to `dir/sim`.
fn simulate(dir: &Path, seed: &str, subjects: &str, windows: &str) -> PathBuf {
    let sim = dir.join("sim");
    ok(&["--seed", seed, "simulate", "--preset", "motion", "--subjects", subjects, "--windows", windows, "--out", s(&sim)]);
    sim.join("targets.jsonl")
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let la = simulate(a.path(), "4", "2", "3");
    let lb = simulate(b.path(), "4", "2", "3");
    let lc = simulate(c.path(), "5", "2", "3");
    assert_eq!(std::fs::read(&la).unwrap(), std::fs::read(&lb).unwrap());
    assert_ne!(std::fs::read(&la).unwrap(), std::fs::read(&lc).unwrap());
    let ma = std::fs::read(la.with_file_name("manifest.json")).unwrap();
    let mb = std::fs::read(lb.with_file_name("manifest.json")).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn evaluate_twice_gives_identical_json() {
    let dir = tempfile::tempdir().unwrap();
    let log = simulate(dir.path(), "7", "5", "6");
    let r1 = dir.path().join("r1");
    let r2 = dir.path().join("r2");
    for out in [&r1, &r2] {
        ok(&["evaluate", "--task", "motion", "--folds", "5", "--seed", "7", "-i", s(&log), "--out", s(out)]);
    }
    let a = std::fs::read(r1.join("report.json")).unwrap();
    let b = std::fs::read(r2.join("report.json")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);

    let rep = dir.path().join("artifacts");
    ok(&["report", "-i", s(&r1.join("report.json")), "-o", s(&rep)]);
    let svg = std::fs::read_to_string(rep.join("confusion.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    let csv = std::fs::read_to_string(rep.join("confusion.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + MotionClass::COUNT);
}

#[test]
fn train_then_predict_fits_the_training_logs() {
    let dir = tempfile::tempdir().unwrap();
    let log = simulate(dir.path(), "2", "4", "8");
    let model = dir.path().join("motion.grdm");
    ok(&["--seed", "2", "train", "--task", "motion", "-i", s(&log), "-o", s(&model)]);
    let preds = dir.path().join("pred.jsonl");
    ok(&["--seed", "2", "predict", "-i", s(&log), "-m", s(&model), "-o", s(&preds)]);

    let text = std::fs::read_to_string(&preds).unwrap();
    let (mut truth, mut pred) = (Vec::new(), Vec::new());
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        truth.push(serde_json::from_value::<MotionClass>(v["truth"].clone()).unwrap().code());
        pred.push(serde_json::from_value::<MotionClass>(v["prediction"].clone()).unwrap().code());
    }
    assert_eq!(truth.len(), 4 * MotionClass::COUNT * 8);
    let names = MotionClass::ALL.iter().map(|c| c.to_string()).collect();
    let f1 = ClassificationReport::from_predictions(names, &truth, &pred).macro_f1;
    assert!(f1 >= 0.95, "in-sample macro-F1 {f1}");

    // The bundle carries its own config, so predictions survive a reload
    // with a different --config on the command line.
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"hog_bins": 4}"#).unwrap();
    let again = dir.path().join("pred2.jsonl");
    ok(&["--seed", "2", "--config", s(&cfg), "predict", "-i", s(&log), "-m", s(&model), "-o", s(&again)]);
    assert_eq!(std::fs::read(&preds).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn mismatched_bundle_version_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let log = simulate(dir.path(), "1", "1", "3");
    let model = dir.path().join("m.grdm");
    ok(&["train", "--task", "height", "-i", s(&log), "-o", s(&model)]);
    let mut bytes = std::fs::read(&model).unwrap();
    bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
    std::fs::write(&model, bytes).unwrap();
    let out = pedradar(&["predict", "-i", s(&log), "-m", s(&model)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version 99"));
}

#[test]
fn exit_codes_for_usage_and_data_errors() {
    assert_eq!(pedradar(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(pedradar(&["evaluate", "--task", "motion"]).status.code(), Some(1));
    assert_eq!(pedradar(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.jsonl");
    assert_eq!(pedradar(&["extract", "--task", "motion", "-i", s(&missing)]).status.code(), Some(2));

    let log = dir.path().join("bad.jsonl");
    std::fs::write(&log, "{\"t\": 0, \"track\": \"a\", \"x\": 1, \"y\": 0, \"v\": 1}\nnot json\n").unwrap();
    let strict = pedradar(&["--strict", "extract", "--task", "motion", "-i", s(&log)]);
    assert_eq!(strict.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&strict.stderr).contains("line 2"));
    // Lenient reading skips the bad line, then finds too few targets.
    let lenient = pedradar(&["extract", "--task", "motion", "-i", s(&log)]);
    assert_eq!(lenient.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("1 records rejected"));
}

#[test]
fn csv_and_jsonl_logs_give_the_same_features() {
    let dir = tempfile::tempdir().unwrap();
    let jsonl = simulate(dir.path(), "6", "1", "3");
    let csv_dir = dir.path().join("csv");
    ok(&["--seed", "6", "simulate", "--preset", "motion", "--subjects", "1", "--windows", "3", "--format", "csv", "--out", s(&csv_dir)]);
    let a = ok(&["extract", "--task", "height", "-i", s(&jsonl)]).stdout;
    let b = ok(&["extract", "--task", "height", "-i", s(&csv_dir.join("targets.csv"))]).stdout;
    assert!(String::from_utf8_lossy(&a).lines().count() > 1);
    assert_eq!(a, b);
}

#[test]
fn printed_config_reads_back() {
    let out = ok(&["config"]);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, &out.stdout).unwrap();
    let again = ok(&["--config", s(&cfg), "config"]);
    assert_eq!(out.stdout, again.stdout);
}
