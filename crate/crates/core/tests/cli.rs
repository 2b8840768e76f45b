use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mvstieltjes::experiment::{run_experiment, Experiment, ExperimentConfig, Method};
use mvstieltjes::output::deserialize_recurrence;

fn cli(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mvstieltjes"));
    cmd.args(args);
    if let Some(dir) = out {
        cmd.arg("--out").arg(dir);
    }
    cmd.output().expect("spawn CLI")
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cli(&["--help"], None).status.code(), Some(0));
    assert_eq!(cli(&["run", "--experiment", "nope", "--method", "ms"], None).status.code(), Some(1));
    assert_eq!(cli(&["run", "--experiment", "ann"], None).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let res = cli(&["run", "--experiment", "ann", "--method", "exact", "--degree", "3"], Some(dir.path()));
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("exact"));
}

#[test]
fn two_dimensional_run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let res = cli(&["run", "--experiment", "ann", "--method", "ms", "--degree", "6"], Some(dir.path()));
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["manifest.json", "recurrence.json", "error_matrix.csv", "cond.csv", "cc_residuals.csv", "christoffel.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let cond = fs::read_to_string(dir.path().join("cond.csv")).unwrap();
    assert_eq!(cond.lines().count(), 1 + 7);
    let e = fs::read_to_string(dir.path().join("error_matrix.csv")).unwrap();
    assert_eq!(e.lines().count(), 28);
    assert!(e.lines().all(|l| l.split(',').count() == 28));
    assert!(e.split([',', '\n']).filter(|v| !v.is_empty()).all(|v| v == "-inf" || v.parse::<f64>().is_ok_and(f64::is_finite)));

    let mut cfg = ExperimentConfig::new(Experiment::Ann, Method::Ms, Some(6));
    cfg.output_dir = dir.path().to_path_buf();
    let in_process = run_experiment(&cfg).unwrap().rec.unwrap();
    assert_eq!(deserialize_recurrence(&dir.path().join("recurrence.json")).unwrap(), in_process);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["experiment"], "ann");
    assert_eq!(manifest["config"]["fourier_points"], 29);
    assert_eq!(manifest["summary"]["status"], "ok");
}

#[test]
fn three_dimensional_run_has_no_christoffel_grid() {
    let dir = tempfile::tempdir().unwrap();
    let res = cli(&["run", "--experiment", "tor", "--method", "ml", "--degree", "3"], Some(dir.path()));
    assert!(res.status.success());
    assert!(dir.path().join("recurrence.json").exists());
    assert!(!dir.path().join("christoffel.csv").exists());
}

#[test]
fn moment_breakdown_exits_two_and_reports_degree() {
    let dir = tempfile::tempdir().unwrap();
    let res = cli(&["run", "--experiment", "jac2", "--method", "mm", "--degree", "25"], Some(dir.path()));
    assert_eq!(res.status.code(), Some(2));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let k = manifest["summary"]["breakdown_degree"].as_u64().unwrap();
    assert!((1..=25).contains(&k));
    assert_eq!(manifest["summary"]["degree_reached"].as_u64().unwrap(), k - 1);
    let cond = fs::read_to_string(dir.path().join("cond.csv")).unwrap();
    assert_eq!(cond.lines().count(), 27);
    assert!(dir.path().join("error_matrix.csv").exists());
}

#[test]
fn custom_cloud_file_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("pts.csv");
    let mut text = String::from("x1,x2\n");
    for k in 0..400 {
        let t = k as f64 * 0.37;
        text.push_str(&format!("{},{}\n", t.cos() * (1.0 + 0.3 * (3.0 * t).sin()), t.sin()));
    }
    fs::write(&cloud, text).unwrap();
    let out = dir.path().join("out");
    let res = cli(
        &["run", "--experiment", "cloud", "--method", "ms", "--degree", "4", "--cloud", cloud.to_str().unwrap()],
        Some(&out),
    );
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["summary"]["nodes"], 400);
}
