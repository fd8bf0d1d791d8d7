use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn curvarb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvarb"))
        .args(args)
        .env_remove("CURV_ARB_THREADS")
        .output()
        .expect("binary runs")
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn two_assets_print_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = curvarb(&["tstar", "--d", "2", "--out", path(dir.path())]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0");
}

#[test]
fn out_of_range_parameters_exit_with_status_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["tstar", "--d", "9"],
        vec!["simulate-sde", "--dt", "0"],
        vec!["solve-mincurv", "--stencil-radius", "7"],
        vec!["simulate-sde", "--x0", "0.1,0.2,0.3", "--n-paths", "2"],
        vec!["simulate-sde", "--x0", "5,0", "--n-paths", "2"],
        vec!["check-certificate", "--candidate", "{\"type\":\"cubic\"}"],
        vec!["solve-mcf", "--no-such-flag"],
    ] {
        let mut a = args.clone();
        a.extend(["--out", path(dir.path())]);
        let out = curvarb(&a);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = error_json(&out);
        assert_eq!(err["error"]["status"], 2, "{args:?}");
        assert!(err["error"]["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
}

#[test]
fn nonconvergence_exits_with_status_3_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let out = curvarb(&["solve-mincurv", "--domain", "disk", "--max-steps", "5", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "no-convergence");
    assert_eq!(err["error"]["iterations"], 5);
    assert!(!err["error"]["history"].as_array().unwrap().is_empty());
}

#[test]
fn io_failures_exit_with_status_4() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = curvarb(&["tstar", "--d", "2", "--out", path(&blocker.join("sub"))]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_json(&out)["error"]["kind"], "io");
    let missing = dir.path().join("missing.csv");
    let out = curvarb(&["simulate-sde", "--field", path(&missing), "--source", "arrival-field", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn manifest_hashes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = curvarb(&["solve-mcf", "--domain", "disk", "--h", "0.02", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(dir.path());
    assert_eq!(m["command"], "solve-mcf");
    assert_eq!(m["config"]["h"], 0.02);
    assert!(m["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
    assert!(m["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    let files = m["files"].as_array().unwrap();
    let mut names: Vec<&str> = files.iter().map(|f| f["path"].as_str().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["field.csv", "fronts.json", "summary.json"]);
    for f in files {
        let bytes = fs::read(dir.path().join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"], bytes.len());
        assert_eq!(f["sha256"], hex::encode(Sha256::digest(&bytes)));
    }
    // summary numbers are in the manifest
    let max = m["summary"]["max"].as_f64().unwrap();
    assert!((max - 1.0).abs() < 0.02, "{max}");
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out_dir = dir.path().join("out");
    fs::write(
        &cfg,
        format!(r#"{{"command": "check-certificate", "d": 5, "samples": 500, "out": "{}"}}"#, path(&out_dir)),
    )
    .unwrap();
    let out = curvarb(&["run", "--config", path(&cfg), "--d", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&out_dir);
    assert_eq!(m["config"]["d"], 4);
    assert_eq!(m["config"]["samples"], 500);
    assert_eq!(m["summary"]["bound"], 0.75);

    fs::write(&cfg, r#"{"command": "tstar", "dee": 3}"#).unwrap();
    assert_eq!(curvarb(&["run", "--config", path(&cfg)]).status.code(), Some(2));
    fs::write(&cfg, r#"{"d": 3}"#).unwrap();
    assert_eq!(curvarb(&["run", "--config", path(&cfg)]).status.code(), Some(2));
}

#[test]
fn quadratic_certificate_bounds_four_assets() {
    let dir = tempfile::tempdir().unwrap();
    let out = curvarb(&["check-certificate", "--candidate", "quadratic", "--d", "4", "--out", path(dir.path())]);
    assert!(out.status.success());
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed["verdict"], "supersolution-evidence");
    assert_eq!(printed["bound"], 0.75);
    let cert: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["candidate_id"], printed["candidate"]);
}

#[test]
fn threads_fall_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_curvarb"))
        .args(["tstar", "--d", "2", "--out", path(dir.path())])
        .env("CURV_ARB_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(manifest(dir.path())["threads"], 3);
    let out = Command::new(env!("CARGO_BIN_EXE_curvarb"))
        .args(["tstar", "--d", "2", "--threads", "2", "--out", path(dir.path())])
        .env("CURV_ARB_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(manifest(dir.path())["threads"], 2);
}

fn csv_bytes(args: &[&str], threads: &str, name: &str) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let mut a = args.to_vec();
    a.extend(["--threads", threads, "--out", path(dir.path())]);
    let out = curvarb(&a);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    fs::read(dir.path().join(name)).unwrap()
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let runs: [(&[&str], &str); 4] = [
        (&["simulate-sde", "--process", "circle", "--n-paths", "100", "--seed", "7"], "paths.csv"),
        (&["simulate-sde", "--domain", "disk", "--x0", "0.3,0", "--n-paths", "50", "--dt", "1e-3"], "paths.csv"),
        (&["simulate-market", "--n-paths", "20", "--h", "0.03", "--seed", "3"], "markets.csv"),
        (&["solve-mincurv", "--h", "0.03"], "field.csv"),
    ];
    for (args, name) in runs {
        let one = csv_bytes(args, "1", name);
        assert_eq!(one, csv_bytes(args, "4", name), "{args:?}");
        assert_eq!(one, csv_bytes(args, "1", name), "{args:?}");
    }
}

#[test]
fn saved_fields_drive_the_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let field_dir = dir.path().join("field");
    let out = curvarb(&["solve-mcf", "--h", "0.01", "--out", path(&field_dir)]);
    assert!(out.status.success());
    let field = field_dir.join("field.csv");
    let sim = dir.path().join("sim");
    let out = curvarb(&[
        "simulate-sde",
        "--source",
        "arrival-field",
        "--field",
        path(&field),
        "--n-paths",
        "50",
        "--out",
        path(&sim),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&sim);
    assert_eq!(m["summary"]["censored_fraction"], 0.0);
    let mean = m["summary"]["mean"]["value"].as_f64().unwrap();
    assert!(mean > 0.2 && mean < 0.29, "{mean}");
}

#[test]
fn float_output_uses_twelve_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    curvarb(&["simulate-sde", "--process", "circle", "--n-paths", "5", "--out", path(dir.path())]);
    let text = fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    for field in text.lines().skip(1).flat_map(|l| l.split(',').skip(1)) {
        let digits = field.trim_start_matches('-').split('e').next().unwrap().replace('.', "");
        assert!(digits.trim_start_matches('0').len() <= 12, "{field}");
    }
}
