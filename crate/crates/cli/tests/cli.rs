use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wavekin"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn cancellation_check_prints_a_zero_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(&["check", "cancellation", "--S", "4"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    let rows: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(out.join("cancellation.json")).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["relative"].as_f64().unwrap() <= 1e-12 && r["exact_identity_zero"] == true));
    assert_eq!(manifest(&out)["exit_status"], 0);
}

#[test]
fn malformed_config_exits_2_with_only_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "q.json", "{ not json");
    let out = tmp.path().join("run");
    let o = run(&["--config", cfg.to_str().unwrap(), "count"], &out);
    assert_eq!(o.status.code(), Some(2));
    let files: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files, vec![std::ffi::OsString::from("manifest.json")]);
    let m = manifest(&out);
    assert_eq!(m["exit_status"], 2);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn unknown_flags_and_subcommands_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["count", "--frobnicate"], tmp.path()).status.code(), Some(2));
    assert_eq!(run(&["explode"], tmp.path()).status.code(), Some(2));
}

#[test]
fn count_both_reports_agreement() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = configs().join("count_rz.json");
    let o = run(&["--config", cfg.to_str().unwrap(), "count", "--method", "both"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("count.json")).unwrap()).unwrap();
    assert_eq!(v["agree"], true);
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(results[0]["count"], results[1]["count"]);
    assert!(results[0]["rel_error"].as_f64().unwrap() < 0.1);
}

#[test]
fn budget_refusal_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = configs().join("count_rz.json");
    let o = run(&["--config", cfg.to_str().unwrap(), "--budget", "100", "count", "--method", "brute"], &out);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("estimated cost"));
    assert_eq!(manifest(&out)["exit_status"], 4);
}

#[test]
fn strict_escalates_failed_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"kind": "concentration", "d": 2, "L": 6.0, "cutoff": 1.0, "k": [0, 0],
            "width_exponent": -2.5, "centers": [0.2, 0.4], "points": 11, "beta_seed": 7, "min_factor": 1e9}"#,
    );
    let lenient = run(&["--config", cfg.to_str().unwrap(), "report"], &tmp.path().join("a"));
    assert_eq!(lenient.status.code(), Some(0));
    let strict = run(&["--config", cfg.to_str().unwrap(), "--strict", "report"], &tmp.path().join("b"));
    assert_eq!(strict.status.code(), Some(3));
    assert!(tmp.path().join("b/report.json").exists());
}

#[test]
fn reruns_reproduce_result_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("trees.json");
    for dir in ["a", "b"] {
        let o = run(&["--config", cfg.to_str().unwrap(), "trees"], &tmp.path().join(dir));
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["correlations.csv", "trees.json"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn simulate_is_independent_of_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "s.json",
        r#"{"spec": {"d": 1, "L": 4.0, "beta": [1.8813407293505764], "cutoff": 1.0},
            "lambda": 1.5, "times": [0.0, 0.5], "ensemble": 40, "seed": 5, "block": 8, "tree_order": 2}"#,
    );
    for (dir, w) in [("one", "1"), ("three", "3")] {
        let o = run(&["--config", cfg.to_str().unwrap(), "--workers", w, "simulate"], &tmp.path().join(dir));
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["spectra_0.csv", "spectra_1.csv", "long.csv"] {
        let a = std::fs::read(tmp.path().join("one").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("three").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let m = manifest(&tmp.path().join("one"));
    assert!(m["outputs"].as_array().unwrap().iter().any(|o| o == "report.json"));
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "s.json",
        r#"{"spec": {"d": 1, "L": 4.0, "beta": [1.8813407293505764], "cutoff": 1.0},
            "lambda": 1.5, "times": [0.5], "ensemble": 4, "seed": 5}"#,
    );
    let read = |dir: &str, seed: Option<&str>| {
        let out = tmp.path().join(dir);
        let mut args = vec!["--config", cfg.to_str().unwrap()];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        args.push("simulate");
        assert_eq!(run(&args, &out).status.code(), Some(0));
        std::fs::read(out.join("spectra_0.csv")).unwrap()
    };
    let base = read("a", None);
    assert_eq!(base, read("b", Some("5")));
    assert_ne!(base, read("c", Some("6")));
}

#[test]
fn regime_report_and_missing_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let cfg = configs().join("regime.json");
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "report"], &out).status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!((v["theta"].as_f64().unwrap() - 30.0 / 13.0).abs() < 1e-12);
    assert_eq!(run(&["simulate"], &tmp.path().join("m")).status.code(), Some(2));
}
