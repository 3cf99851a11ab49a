use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run_cli(config: &str, out: &Path, threads: usize) -> Output {
    let cfg = out.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_cantorscale"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string())
        .output()
        .unwrap()
}

#[test]
fn scaling_graph_is_identical_across_thread_counts() {
    let cfg = r#"{"family":{"kind":"quadratic"},"command":"scaling-graph","depth":9,"epsilon":0.1}"#;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (oa, ob) = (run_cli(cfg, a.path(), 1), run_cli(cfg, b.path(), 4));
    assert!(oa.status.success() && ob.status.success());
    let csv = |d: &Path| fs::read(d.join("scaling-graph.csv")).unwrap();
    assert_eq!(csv(a.path()), csv(b.path()));
    assert_eq!(oa.stdout, ob.stdout);
}

#[test]
fn seeded_sampling_is_reproducible() {
    let cfg = r#"{"family":{"kind":"quadratic"},"command":"invariants","epsilon":0.3,"seed":42}"#;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run_cli(cfg, a.path(), 2).status.code(), Some(0));
    assert_eq!(run_cli(cfg, b.path(), 3).status.code(), Some(0));
    let json = |d: &Path| fs::read(d.join("invariants.json")).unwrap();
    assert_eq!(json(a.path()), json(b.path()));
}

#[test]
fn bad_config_names_the_key_and_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(r#"{"family":{"kind":"quadratic"},"command":"partition","depth":40}"#, dir.path(), 0);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("depth"), "{err}");
}

#[test]
fn dimension_curve_writes_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"family":{"kind":"tent"},"command":"dimension-curve","depth":8,"epsilon_grid":[0.01,0.1,1.0]}"#;
    let out = run_cli(cfg, dir.path(), 0);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("dimension-curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("dimension-curve.json")).unwrap()).unwrap();
    assert!(report["slope"].as_f64().unwrap().is_finite());
}
