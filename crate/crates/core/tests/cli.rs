use std::path::Path;
use std::process::{Command, Output};

fn lclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lclab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn smoke() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs/smoke.json")
        .to_string_lossy()
        .into_owned()
}

#[test]
fn combf_passes() {
    let o = lclab(&["combf", "--max-l0", "5", "--max-s", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("all cases pass"));
}

#[test]
fn combf_guard_is_a_usage_error() {
    let o = lclab(&["combf", "--max-l0", "40", "--max-s", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_exits_2() {
    assert_eq!(lclab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(lclab(&["tails", "--bogus"]).status.code(), Some(2));
}

#[test]
fn tails_with_oracle() {
    let o = lclab(&["tails", "--dist", "exponential", "-n", "64", "-k", "8", "--oracle", "--count", "20000"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    let mut lines = s.lines();
    assert!(lines.next().unwrap().ends_with(",exact"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.split(',').count() == 10));
}

#[test]
fn oracle_refuses_other_distributions() {
    let o = lclab(&["tails", "--dist", "cube", "-n", "8", "--oracle", "--count", "1000"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_string_lossy().into_owned();
    let o = lclab(&["verify", "--config", &smoke(), "--output-dir", &out_s]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("ledgers").read_dir().unwrap().count() >= 2);
    let r = lclab(&["report", "--input", &out_s]);
    assert_eq!(r.status.code(), Some(0));
    assert!(stdout(&r).contains("main_order_stat"));
    assert!(out.join("plot/main_order_stat.csv").exists());
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lclab"))
        .args(["verify", "--config", &smoke()])
        .env("LCLAB_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn invalid_config_exits_2_and_missing_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"schema_version": 1, "distributions": [{"kind": "cube_uniform"}], "n": [4],
            "families": [{"family": "linf_tail", "t": []}], "sample_count": 5, "seed": 1}"#,
    )
    .unwrap();
    let o = lclab(&["verify", "--config", &bad.to_string_lossy()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("`t` grid is empty") && err.contains("sample_count"), "{err}");
    let o = lclab(&["verify", "--config", &dir.path().join("missing.json").to_string_lossy()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn no_qualifying_constant_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(smoke()).unwrap()).unwrap();
    v["constant_search_grid"] = serde_json::json!([0.01]);
    v["output_dir"] = serde_json::json!(dir.path().join("o"));
    std::fs::write(&cfg, v.to_string()).unwrap();
    assert_eq!(lclab(&["verify", "--config", &cfg.to_string_lossy()]).status.code(), Some(1));
}

#[test]
fn sample_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("b.lcsb");
    let o = lclab(&["sample", "--dist", "lp-ball", "--p", "1", "-n", "5", "--count", "100", "--seed", "3", "--out", &p.to_string_lossy()]);
    assert_eq!(o.status.code(), Some(0));
    let b = lclab::distributions::read_batch(&p).unwrap();
    assert_eq!((b.count(), b.dimension(), b.seed()), (100, 5, 3));
    let csv = lclab(&["sample", "--dist", "cube", "-n", "3", "--count", "4", "--seed", "1", "--format", "csv"]);
    assert_eq!(stdout(&csv).lines().count(), 5);
    // a seed is required
    assert_eq!(lclab(&["sample", "--count", "4"]).status.code(), Some(2));
}

#[test]
fn moments_table() {
    let o = lclab(&["moments", "-n", "8", "--count", "5000", "--resamples", "50"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("n_moment,") && s.contains("lr_norm_moment,"));
}
