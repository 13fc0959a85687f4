use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn export(dir: &Path, name: &str) -> PathBuf {
    let log = dir.join(format!("{name}.ndjson"));
    let out = sfc(&[
        "run",
        &scenario(name),
        "--export-log",
        log.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stdout(&out));
    log
}

#[test]
fn run_prints_report_and_passes() {
    let out = sfc(&["run", &scenario("golden_a.json")]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("Settled(Paid)"));
    assert!(text.contains("3880.00"));
    assert!(text.trim_end().ends_with("result: pass"));
}

#[test]
fn run_fails_on_unmet_expectations() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("golden_a.json"))
        .unwrap()
        .replace("\"3880.00\"", "\"3881.00\"");
    let path = dir.path().join("wrong.json");
    std::fs::write(&path, text).unwrap();
    let out = sfc(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("[FAIL] balance fund"));
}

#[test]
fn run_rejects_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = sfc(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse error"));
    let out = sfc(&["run", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_accepts_exports_and_rejects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let log = export(dir.path(), "golden_b.json");
    let out = sfc(&["verify", log.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("valid: 6 events"));

    let text = std::fs::read_to_string(&log).unwrap();
    let tampered = dir.path().join("tampered.ndjson");
    std::fs::write(
        &tampered,
        text.replacen("\"amount\":5000", "\"amount\":5001", 1),
    )
    .unwrap();
    let out = sfc(&["verify", tampered.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout(&out).trim(), "INVALID");
}

#[test]
fn explore_filters() {
    let dir = tempfile::tempdir().unwrap();
    let log = export(dir.path(), "golden_a.json");
    let log = log.to_str().unwrap();

    let out = sfc(&["explore", log, "--contract", "c1"]);
    let kinds: Vec<String> = stdout(&out)
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["kind"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(
        kinds,
        ["ContractCreated", "Invested", "OracleQueried", "Settled"]
    );

    let out = sfc(&["explore", log, "--account", "ghost"]);
    assert!(out.status.success());
    assert!(stdout(&out).is_empty());

    let out = sfc(&["explore", log, "--kind", "Buy"]);
    assert_eq!(stdout(&out).lines().count(), 1);

    let out = sfc(&[
        "explore",
        log,
        "--account",
        "investor",
        "--kind",
        "invested",
    ]);
    assert_eq!(stdout(&out).lines().count(), 1);

    let out = sfc(&["explore", log, "--from-seq", "4"]);
    assert_eq!(stdout(&out).lines().count(), 2);
}

#[test]
fn report_replays_balances() {
    let dir = tempfile::tempdir().unwrap();
    let log = export(dir.path(), "sweep.json");
    let out = sfc(&["report", log.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("3891.70"), "{text}");
    assert!(text.contains("108.30"));
    assert!(text.contains("total supply: 4000.00"));
}
