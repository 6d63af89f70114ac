//! End-to-end tests of the compiled binary: exit codes, artifact layout,
//! config precedence, and byte-level determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hwmodel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["--definitely-not-a-flag"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["enumerate", "--geo", "hex:4", "--out", out]).status.code(), Some(2));
    assert_eq!(
        run(&["select", "--phi", "0.5", "--beta", "0.7", "--out", out]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["select", "--phi", "1.5", "--out", out]).status.code(), Some(2));
    // Exact solve refused on an oversized state space counts as usage: the
    // fix is a config change (--jumps).
    assert_eq!(
        run(&["chain", "--geo", "square:4", "--N", "50", "--out", out]).status.code(),
        Some(2)
    );
}

#[test]
fn numerical_failures_exit_1() {
    // With alpha < 1 an empty zone has unbounded entry payoff, so the logit
    // chain is ill-posed and the transition matrix build reports it.
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["chain", "--alpha", "0.8", "--N", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn enumerate_prints_the_catalog_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = run(&["enumerate", "--geo", "square:4", "--out", out]);
    assert!(res.status.success());
    assert_eq!(stdout(&res).trim(), "24");
    assert!(dir.path().join("patterns.json").is_file());
    assert!(dir.path().join("patterns.csv").is_file());
    assert!(dir.path().join("provenance.json").is_file());

    let res = run(&["enumerate", "--geo", "tri:4", "--out", out, "--format", "json"]);
    assert_eq!(stdout(&res).trim(), "19");
}

#[test]
fn config_file_yields_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"alpha": 2.0, "phi": 0.25, "seed": 11, "geo": "square:4"}"#).unwrap();
    let out = dir.path().to_str().unwrap();
    let res = run(&["select", "--config", cfg.to_str().unwrap(), "--alpha", "1.2", "--out", out]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let prov: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("provenance.json")).unwrap())
            .unwrap();
    assert_eq!(prov["config"]["alpha"], 1.2, "flag wins over file");
    assert_eq!(prov["config"]["phi"], 0.25, "file value survives where no flag is given");
    assert_eq!(prov["config"]["seed"], 11);
    assert_eq!(prov["command"], "select");
    assert!(prov["wall_ms"].is_u64());
    // The materialized config carries the consistent phi/beta pair.
    let beta = prov["config"]["beta"].as_f64().unwrap();
    assert!((beta - 0.25f64.ln().abs()).abs() < 1e-12);
}

#[test]
fn geography_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(run(&["geom", "--geo", "tri:4", "--out", out]).status.success());
    let saved = dir.path().join("geography.json");
    let first = stdout(&run(&["enumerate", "--geo", "tri:4", "--out", out]));
    let second = stdout(&run(&["enumerate", "--geo", saved.to_str().unwrap(), "--out", out]));
    assert_eq!(first.trim(), second.trim());
}

fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "provenance.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn repeat_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "chain".to_string(),
            "--N".into(),
            "8".into(),
            "--eta".into(),
            "0.05".into(),
            "--jumps".into(),
            "5000".into(),
            "--seed".into(),
            "7".into(),
            "--out".into(),
            out.into(),
        ]
    };
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        let argv: Vec<String> = args(out.to_str().unwrap());
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        assert!(run(&argv).status.success());
    }
    let a = data_files(&dir.path().join("a"));
    let b = data_files(&dir.path().join("b"));
    assert_eq!(a.len(), 3, "chain.json, simulate.json, stationary.csv");
    assert_eq!(a, b);
}

#[test]
fn plot_renders_each_artifact_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let res = run(&["bifurcate", "--grid-phi", "0.05:0.95:0.05", "--out", out]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let bif = dir.path().join("bifurcation.json");
    assert!(run(&["plot", bif.to_str().unwrap(), "--out", out]).status.success());
    let svg = fs::read_to_string(dir.path().join("bifurcation.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));

    let res = run(&[
        "partition",
        "--geo",
        "square:4",
        "--grid-phi",
        "0.1:0.9:0.2",
        "--grid-alpha",
        "1.0:2.0:0.5",
        "--out",
        out,
    ]);
    assert!(res.status.success());
    let part = dir.path().join("partition.json");
    assert!(run(&["plot", part.to_str().unwrap(), "--out", out]).status.success());
    assert!(dir.path().join("partition.svg").is_file());

    let res = run(&[
        "stability",
        "--geo",
        "ring:2",
        "--grid-phi",
        "0.1:0.9:0.1",
        "--out",
        out,
    ]);
    assert!(res.status.success());
    let ranges = dir.path().join("stability_ranges.json");
    assert!(run(&["plot", ranges.to_str().unwrap(), "--out", out]).status.success());
    assert!(dir.path().join("ranges.svg").is_file());

    // Unrecognized JSON is a usage error.
    let junk = dir.path().join("junk.json");
    fs::write(&junk, "{\"hello\": 1}").unwrap();
    assert_eq!(run(&["plot", junk.to_str().unwrap(), "--out", out]).status.code(), Some(2));
}

#[test]
fn dynamics_single_trajectory_mode() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = run(&[
        "dynamics",
        "--geo",
        "ring:2",
        "--alpha",
        "1.2",
        "--phi",
        "0.3",
        "--x0",
        "0.9,0.1",
        "--out",
        out,
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(stdout(&res).contains("converged = true"));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x0,x1\n"));
    assert!(csv.lines().count() > 2);
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("trajectory.json")).unwrap())
            .unwrap();
    assert_eq!(doc["converged"], true);
}

#[test]
fn stability_point_mode_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = run(&["stability", "--geo", "square:4", "--alpha", "1.2", "--phi", "0.5", "--out", out]);
    assert!(res.status.success());
    assert!(stdout(&res).contains("of 24 patterns"));
    let csv = fs::read_to_string(dir.path().join("stability.csv")).unwrap();
    assert!(csv.starts_with("pattern_id,M,phi,alpha,"));
    assert_eq!(csv.lines().count(), 25);
    // Restricting to one id keeps one row.
    let res = run(&["stability", "--geo", "square:4", "--pattern", "1", "--out", out]);
    assert!(res.status.success());
    let csv = fs::read_to_string(dir.path().join("stability.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    // Unknown ids are a usage error.
    assert_eq!(
        run(&["stability", "--geo", "square:4", "--pattern", "999", "--out", out]).status.code(),
        Some(2)
    );
}
