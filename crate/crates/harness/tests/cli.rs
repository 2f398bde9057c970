use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"))
}

fn bpmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpmpc")).args(args).output().unwrap()
}

#[test]
fn missing_config_is_exit_2() {
    let out = bpmpc(&["certify", "--config", "/nonexistent/nope.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_arguments_are_exit_2() {
    assert_eq!(bpmpc(&["certify", "--bogus"]).status.code(), Some(2));
    assert_eq!(bpmpc(&["fly"]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("si_setup1")).unwrap() + "\nsurprise = 1\n";
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, text).unwrap();
    let out = bpmpc(&["certify", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_certificate_is_exit_3_unless_forced() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("di_setup1");
    let out_dir = tmp.path().to_str().unwrap();
    let out = bpmpc(&["certify", "--config", cfg.to_str().unwrap(), "--out", out_dir]);
    assert_eq!(out.status.code(), Some(3));
    assert!(tmp.path().join("certificate.json").exists());

    let sim = bpmpc(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out_dir, "--samples", "50", "--horizon", "3"]);
    assert_eq!(sim.status.code(), Some(3));
    assert!(!tmp.path().join("trajectory.csv").exists());

    let forced = bpmpc(&["certify", "--config", cfg.to_str().unwrap(), "--out", out_dir, "--force"]);
    assert_eq!(forced.status.code(), Some(0));
}

#[test]
fn simulate_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("si_setup1");
    let out = bpmpc(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap(), "--samples", "500"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("step,x0,x1,u0,u1,alpha0,alpha1,alpha2,value,candidate_value,phase"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], true);
}
