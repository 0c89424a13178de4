use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn patrol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patrol")).args(args).env_remove("PATROL_OUT_DIR").output().unwrap()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn bundled_scenario_file_validates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.json");
    let p = path.to_str().unwrap();
    assert!(patrol(&["bundled", "--out", p]).status.success());
    let o = patrol(&["validate", "--scenario", p]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("400 nodes, 3 agents, 1 events"));

    let shipped = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/grid20.json");
    assert_eq!(std::fs::read(shipped).unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn malformed_scenario_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"schema_version": 1}"#).unwrap();
    let o = patrol(&["validate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn oversized_horizon_exits_with_budget_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = patrol(&[
        "run",
        "--planning-horizon",
        "30",
        "--mission-end",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn compare_outputs_are_reproducible() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let o = patrol(&["compare", "--mission-end", "40", "--seed", "3", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (files(dirs[0].path()), files(dirs[1].path()));
    for name in ["summary.csv", "lambda_map.csv", "sga_ni_reward.csv", "sga_trajectory.json", "myopic_final_map.csv"] {
        assert!(a.contains_key(name), "missing {name}");
    }
    assert_eq!(a, b);
    let summary = String::from_utf8(a["summary.csv"].clone()).unwrap();
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn decentral_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = patrol(&["decentral", "--protocol", "cloud", "--overrun", "1", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("omega 1"), "{out}");
    let trace: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("decentral_cloud.json")).unwrap()).unwrap();
    assert_eq!(trace["protocol"], "cloud");
    assert_eq!(trace["omega"], 1);
}

#[test]
fn props_reports_every_check() {
    let o = patrol(&["props", "--draws", "60", "--seed", "9"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 15);
}

#[test]
fn unknown_algorithm_is_rejected() {
    let o = patrol(&["run", "--algorithm", "nope"]);
    assert!(!o.status.success());
}
