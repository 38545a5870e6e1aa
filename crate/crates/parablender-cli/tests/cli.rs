use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_parablender"))
}

#[test]
fn covering_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["covering", "--seed", "3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("pipeline covering: PASS"));
    assert!(stdout.contains("delta_max = 0.31875"));
    assert_eq!(
        fs::read_to_string(dir.path().join("covering.txt")).unwrap(),
        stdout
    );
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("covering.json")).unwrap())
            .unwrap();
    assert_eq!(json["passed"], true);
    let cfg = fs::read_to_string(dir.path().join("covering.config.toml")).unwrap();
    assert!(cfg.contains("seed = 3"));
}

#[test]
fn failing_stage_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("b1.toml");
    fs::write(&cfg, "b = 1.0\n").unwrap();
    let out = bin()
        .arg("covering")
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("halted after stage plain-cover"));
}

#[test]
fn config_rejection_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c2.toml");
    fs::write(&cfg, "c = 2\n").unwrap();
    let out = bin()
        .arg("tangency")
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("c = u^2"));

    fs::write(&cfg, "lamda = 0.7\n").unwrap();
    let out = bin()
        .arg("covering")
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["appendix-verify", "--format", "csv", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let table = fs::read_to_string(dir.path().join("appendix-verify.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("pipeline,stage,passed,key,value"));
    assert!(table.contains("appendix-verify,u=1,true,dt_norm,0.5"));
}

#[test]
fn reports_are_reproducible() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = bin()
            .args(["blender", "--seed", "11", "--out"])
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success());
        fs::read(dir.path().join("blender.json")).unwrap()
    };
    assert_eq!(run(), run());
}
