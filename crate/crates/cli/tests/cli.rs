use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_robosec"))
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("robosec-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

#[test]
fn learn_writes_a_versioned_map() {
    let out = scratch("learn");
    let o = run(&[
        "learn",
        "--scenario",
        "single_room",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("single_room.map.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["version"], 1);
    assert_eq!(v["provenance"]["scenario"], "single_room");
}

#[test]
fn fuzz_writes_success_table() {
    let out = scratch("fuzz");
    let o = run(&[
        "fuzz",
        "--fuzzer",
        "volatile,robofuzz",
        "--target",
        "crash",
        "--trials",
        "3",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(out.join("fuzz_crash.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "fuzzer,trials,successes,success_rate_pct");
    assert!(lines[1].starts_with("volatile,3,"));
    assert!(lines[2].starts_with("robofuzz,3,"));
    assert!(out.join("fuzz_crash_robofuzz_series.csv").exists());
    assert!(!out.join("fuzz_crash_robofuzz.json").exists(), "csv only");
}

#[test]
fn configuration_errors_exit_nonzero() {
    let out = scratch("bad");
    let dir = out.to_str().unwrap();
    assert_eq!(code(&run(&["fuzz", "--attack", "none", "--out", dir])), 2);
    assert_eq!(code(&run(&["fuzz", "--trials", "0", "--out", dir])), 2);
    assert_eq!(code(&run(&["detect", "--attack", "none", "--out", dir])), 2);
    assert_ne!(code(&run(&["fuzz", "--fuzzer", "nonsense"])), 0);

    let sc = out.join("extra.json");
    let mut v: serde_json::Value =
        serde_json::from_str(include_str!("../../core/scenarios/single_room.json")).unwrap();
    v["surprise"] = serde_json::json!(1);
    std::fs::write(&sc, v.to_string()).unwrap();
    let o = run(&["detect", "--scenario", sc.to_str().unwrap(), "--out", dir]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("surprise"));
}

#[test]
fn replay_reproduces_and_flags_tampering() {
    let out = scratch("replay");
    let dir = out.to_str().unwrap();
    let o = run(&[
        "detect",
        "--attack",
        "fabrication",
        "--trials",
        "2",
        "--out",
        dir,
        "--format",
        "json",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = out.join("detect_fabrication.json");
    let o = run(&[
        "replay",
        "--report",
        report.to_str().unwrap(),
        "--out",
        dir,
        "--format",
        "json",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("identical"));

    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    v["records"][0]["running_time"] = serde_json::json!(1.0);
    let forged = out.join("forged.json");
    std::fs::write(&forged, v.to_string()).unwrap();
    let o = run(&[
        "replay",
        "--report",
        forged.to_str().unwrap(),
        "--out",
        dir,
        "--format",
        "json",
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn mitigate_writes_cost_table() {
    let out = scratch("mitigate");
    let o = run(&[
        "mitigate",
        "--attack",
        "fabrication",
        "--trials",
        "2",
        "--out",
        out.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = std::fs::read_to_string(out.join("mitigate.csv")).unwrap();
    assert!(t.starts_with("attack,clean_distance_cm,mitigated_distance_cm"));
    assert_eq!(t.lines().count(), 2);
}
