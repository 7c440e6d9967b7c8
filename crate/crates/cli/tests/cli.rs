use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sri(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sri"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.json");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = r#"{
  "name": "small",
  "problem": {"id": "f1"},
  "schedule": {"scale": 0.01, "exponent": 0.6},
  "lambdas": [0.1, 1.0],
  "iterations": 3000,
  "x0": [1.0, 1.0],
  "noise": {"mean_plus": 5.0, "mean_minus": 1.0, "sigma": 1.0},
  "seeds": [0, 1],
  "apt_starts": [10, 1000],
  "sweep_samples": 2000
}"#;

#[test]
fn run_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = sri(&[
        "run",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    assert!(runs.starts_with("lambda,seed,n,gap,sup_norm\n"));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(
        summary.lines().next().unwrap(),
        "lambda,median_gap,q25,q75,n_delta_0.05"
    );
    assert_eq!(summary.lines().count(), 3);
    assert!(out.join("gap_lambda_0p1.svg").exists());
    assert!(out.join("gap_lambda_1.svg").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["cells"].as_array().unwrap().len(), 4);
}

#[test]
fn identical_configs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(
        code(&sri(&[
            "run",
            &cfg,
            "--out-dir",
            a.to_str().unwrap(),
            "--jobs",
            "1"
        ])),
        0
    );
    assert_eq!(
        code(&sri(&[
            "run",
            &cfg,
            "--out-dir",
            b.to_str().unwrap(),
            "--jobs",
            "3"
        ])),
        0
    );
    for f in ["runs.csv", "summary.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seeds_and_iterations_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("o");
    let o = sri(&[
        "run",
        &cfg,
        "--seeds",
        "5..8",
        "--iterations",
        "50",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    let seeds: std::collections::BTreeSet<&str> = runs
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(seeds.into_iter().collect::<Vec<_>>(), vec!["5", "6", "7"]);
    // 51 points per run, 2 lambdas x 3 seeds
    assert_eq!(runs.lines().count() - 1, 6 * 51);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write_config(
        dir.path(),
        &SMALL.replace("\"seeds\": [0, 1]", "\"seeds\": []"),
    );
    assert_eq!(code(&sri(&["run", &empty])), 2);
    assert_eq!(code(&sri(&["run", "/nonexistent/cfg.json"])), 2);
    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{ not json").unwrap();
    assert_eq!(code(&sri(&["certify", broken.to_str().unwrap()])), 2);
    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(code(&sri(&["run", &cfg, "--iterations", "0"])), 2);
    assert_eq!(code(&sri(&["run", &cfg, "--seeds", "abc"])), 2);
    assert_eq!(code(&sri(&["reproduce", "fig3"])), 2);
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
      "problem": {"id": "squared_norm", "dim": 2},
      "oracle": {"kind": "exact_gradient"},
      "schedule": {"scale": 1.5, "exponent": 0.0},
      "lambdas": [0.1], "iterations": 200, "x0": [1.0, 1.0], "seeds": [0]
    }"#;
    let cfg = write_config(dir.path(), body);
    let o = sri(&[
        "run",
        &cfg,
        "--out-dir",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("divergence"));
}

#[test]
fn reproduce_flags_a_too_short_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig1");
    let o = sri(&[
        "reproduce",
        "fig1",
        "--iterations",
        "300",
        "--seeds",
        "2",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("FAIL"));
    assert!(out.join("summary.csv").exists());
}

#[test]
fn reproduce_fig1_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig1");
    let o = sri(&["reproduce", "fig1", "--out-dir", out.to_str().unwrap()]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{text}");
    assert_eq!(text.matches("PASS").count(), 5);
    assert_eq!(
        fs::read_dir(&out)
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .path()
                    .extension()
                    .is_some_and(|x| x == "svg")
            })
            .count(),
        4
    );
}

#[test]
fn certify_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("c");
    let o = sri(&["certify", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["problem"], "f1");
    let entries = v["entries"].as_array().unwrap();
    assert!(entries
        .iter()
        .any(|e| e["check"] == "pl" && e["report"]["verdict"] == "pass"));
    assert!(out.join("certify.json").exists());
}

#[test]
fn bias_sweep_writes_table_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("s");
    let o = sri(&["bias-sweep", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("bias_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("bias_sweep.json")).unwrap()).unwrap();
    assert!(v["model"]["b3"].as_f64().unwrap() > 0.0);
}

#[test]
fn apt_writes_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("a");
    let o = sri(&["apt", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("apt.csv")).unwrap();
    // 2 lambdas x 2 seeds x 2 starts
    assert_eq!(csv.lines().count(), 1 + 8);
}

#[test]
fn help_lists_subcommands() {
    let o = sri(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for s in [
        "run",
        "reproduce",
        "certify",
        "bias-sweep",
        "apt",
        "--seeds",
        "--out-dir",
        "--jobs",
        "--iterations",
    ] {
        assert!(text.contains(s), "{s}");
    }
}
