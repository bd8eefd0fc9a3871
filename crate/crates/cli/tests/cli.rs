use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mnist-1k")
}

fn memtrain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memtrain"))
        .args(args)
        .env_remove("MNIST_DIR")
        .output()
        .unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = memtrain(&["baseline", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_spec_file_is_a_usage_error() {
    let out = memtrain(&["custom", "--spec", "/nonexistent/spec.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_spec_names_the_offending_key() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    std::fs::write(&spec, r#"{"device": {"model": "linear", "bits": 0}}"#).unwrap();
    let out = memtrain(&["custom", "--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bits"));
}

#[test]
fn missing_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = memtrain(&[
        "baseline",
        "--data-dir",
        dir.path().join("nothing").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn custom_run_writes_artifacts_and_summarize_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("tiny.json");
    std::fs::write(
        &spec,
        r#"{"name": "tiny", "device": {"model": "linear", "bits": 4},
            "trainer": {"epochs": 1},
            "sweep": [{"param": "device.bits", "values": [3, 4]}]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = memtrain(&[
        "custom",
        "--spec",
        spec.to_str().unwrap(),
        "--data-dir",
        fixture().to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--seeds",
        "1,2",
        "--subset",
        "200",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("cell,runs,meanAccuracy,stdAccuracy"));
    assert_eq!(table.lines().count(), 3);

    let root = out_dir.join("tiny");
    for id in ["bits=3_seed1", "bits=3_seed2", "bits=4_seed1", "bits=4_seed2"] {
        assert!(root.join("runs").join(format!("{id}.csv")).is_file(), "{id}");
        assert!(root.join("runs").join(format!("{id}.json")).is_file(), "{id}");
    }
    let summary = std::fs::read_to_string(root.join("summary.csv")).unwrap();

    let again = memtrain(&["summarize", root.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(String::from_utf8(again.stdout).unwrap(), table);
    assert_eq!(std::fs::read_to_string(root.join("summary.csv")).unwrap(), summary);
}
