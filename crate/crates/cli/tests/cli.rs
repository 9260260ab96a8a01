use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn curvlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvlab")).args(args).current_dir(dir).output().unwrap()
}

fn run_ok(args: &[&str], dir: &Path) -> (String, Value) {
    let out = curvlab(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let csv_at = args.iter().position(|a| *a == "--out").map(|i| args[i + 1]).unwrap();
    let csv = std::fs::read_to_string(dir.join(csv_at)).unwrap();
    let json = std::fs::read_to_string(dir.join(csv_at).with_extension("json")).unwrap();
    (csv, serde_json::from_str(&json).unwrap())
}

const SMALL_DECAY: [&str; 9] = ["decay", "--d-list", "10,20", "--n-samples", "400", "--restarts", "4", "--seed", "3"];

#[test]
fn decay_csv_has_one_row_per_degree_and_a_slope_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SMALL_DECAY.to_vec();
    args.extend(["--out", "decay.csv"]);
    let (csv, json) = run_ok(&args, dir.path());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "curv,n,r,d,a,estimate,ci95,n_samples,seed");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("hbc,2,1,10,1,"));
    assert!(lines[2].starts_with("hbc,2,1,20,1,"));
    assert!(lines[3].starts_with("hbc,2,1,slope,1,"));
    assert_eq!(json["experiment"], "decay");
    assert_eq!(json["config"]["d_list"], serde_json::json!([10, 20]));
    assert_eq!(json["config"]["seed"], 3);
    assert!(json["build_id"].as_str().is_some_and(|s| !s.is_empty()));
    assert_eq!(json["results"]["fits"][0]["exponent"], 1.0);
}

#[test]
fn regime_violation_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = curvlab(&["decay", "--curv", "hbc", "--n", "4", "--r", "1", "--out", "x.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("3r ≥ 2n−1"), "{err}");
    assert!(!dir.path().join("x.csv").exists());
    let out = curvlab(&["disc-tail", "--case", "bilinear", "--n", "5", "--r", "2", "--out", "y.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"experiment": "decay", "colour": 3}"#).unwrap();
    let out = curvlab(&["decay", "--config", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("other.json"), r#"{"experiment": "wishart"}"#).unwrap();
    assert_eq!(curvlab(&["decay", "--config", "other.json"], dir.path()).status.code(), Some(2));
    assert_eq!(curvlab(&["empirical-density", "--r", "2", "--n", "3"], dir.path()).status.code(), Some(2));
    assert_eq!(curvlab(&["decay", "--a", "-1"], dir.path()).status.code(), Some(2));
    assert_eq!(curvlab(&["volume", "--n", "3", "--r", "3"], dir.path()).status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"experiment": "wishart", "n": 3, "r": 2, "n_samples": 500, "seed": 1, "out_path": "w.csv"}"#,
    )
    .unwrap();
    let (csv, json) = run_ok(&["wishart", "--config", "run.json", "--seed", "9", "--out", "w.csv"], dir.path());
    assert_eq!(json["config"]["seed"], 9);
    assert_eq!(json["config"]["n_samples"], 500);
    assert_eq!(csv.lines().next().unwrap(), "n,r,estimate,ci95,expected,n_samples,seed");
    assert!(csv.lines().nth(1).unwrap().starts_with("3,2,"));
    assert!(csv.lines().nth(1).unwrap().ends_with(",6,500,9"));
}

#[test]
fn other_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, json) = run_ok(&["jets-cov", "--out", "cov.csv"], dir.path());
    assert_eq!(csv.lines().next().unwrap(), "n,r,d,max_entry_distance");
    assert_eq!(csv.lines().count(), 9);
    assert!((json["results"]["slope"].as_f64().unwrap() + 1.0).abs() < 0.15);
    let (csv, _) = run_ok(&["volume", "--n", "3", "--r", "2", "--d", "5", "--out", "vol.csv"], dir.path());
    assert_eq!(csv, "n,r,d,volume\n3,2,5,2.5e1\n");
    let (csv, json) = run_ok(
        &["disc-tail", "--case", "linearized", "--n", "3", "--r", "1", "--n-samples", "3000", "--out", "tail.csv"],
        dir.path(),
    );
    assert_eq!(csv.lines().next().unwrap(), "eps,count,prob,codim,slope_fit");
    assert_eq!(json["results"]["codim"], 1);
    let (csv, json) = run_ok(&["empirical-density", "--d", "4", "--points", "20", "--out", "pts.csv"], dir.path());
    assert_eq!(csv.lines().next().unwrap(), "system_seed,point_idx,curv_value,below_threshold");
    assert_eq!(csv.lines().count(), 21);
    assert_eq!(json["results"]["estimate"]["params"]["kind"], "empirical-density-below");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = SMALL_DECAY.to_vec();
    a.extend(["--out", "a.csv"]);
    let mut b = SMALL_DECAY.to_vec();
    b.extend(["--out", "b.csv"]);
    assert_eq!(run_ok(&a, dir.path()).0, run_ok(&b, dir.path()).0);
    let tail = |out: &'static str| {
        vec!["disc-tail", "--case", "bilinear", "--n", "5", "--r", "3", "--n-samples", "300", "--restarts", "4", "--out", out]
    };
    assert_eq!(run_ok(&tail("t1.csv"), dir.path()).0, run_ok(&tail("t2.csv"), dir.path()).0);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "4", "16"] {
        let decay_out = format!("decay{workers}.csv");
        let mut args = SMALL_DECAY.to_vec();
        args.extend(["--workers", workers, "--out", &decay_out]);
        let decay = run_ok(&args, dir.path()).0;
        let cross_out = format!("cross{workers}.csv");
        let cross = run_ok(
            &[
                "cross-validate",
                "--d",
                "6",
                "--systems",
                "3",
                "--points",
                "12",
                "--n-samples",
                "300",
                "--restarts",
                "4",
                "--workers",
                workers,
                "--out",
                &cross_out,
            ],
            dir.path(),
        );
        assert_eq!(cross.1["workers"].as_u64().unwrap().to_string(), workers);
        outputs.push((decay, cross.0));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}
