use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cotdr(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cotdr"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const NOISELESS: &str = r#"{"receiver": {"noise_rms": 0.0}, "averaging": 1}"#;

#[test]
fn simulate_then_measure_recovers_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), NOISELESS).unwrap();
    let o = cotdr(&["simulate", "--config", "c.json", "--out", "tr", "--runs", "1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("tr/run_000_A.cotr").exists());
    assert!(dir.path().join("tr/manifest.json").exists());

    let o = cotdr(
        &["--jobs", "1", "measure", "--config", "c.json", "--traces", "tr", "--report", "r.json"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    let rt = report["results"][0]["round_trip"].as_f64().unwrap();
    assert!((rt - 990.537e-6).abs() <= 2e-12, "round trip {rt:e}");
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    let o = cotdr(
        &[
            "export", "--trace", "tr/run_000_A.cotr", "--csv", "t.csv", "--from", "-1e-7", "--to", "1e-7",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(rows.lines().next(), Some("time_s,value"));
    assert_eq!(rows.lines().count(), 1 + 2001);

    // Wrong fiber length in the analysis config: no peak inside the end window.
    fs::write(
        dir.path().join("short.json"),
        r#"{"receiver": {"noise_rms": 0.0}, "averaging": 1, "link": {"length": 90000.0}}"#,
    )
    .unwrap();
    let o = cotdr(
        &["measure", "--config", "short.json", "--traces", "tr", "--report", "r2.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));

    let path = dir.path().join("tr/run_000_B.cotr");
    let mut bytes = fs::read(&path).unwrap();
    bytes[4] = 9;
    fs::write(&path, bytes).unwrap();
    let o = cotdr(&["measure", "--config", "c.json", "--traces", "tr", "--report", "r3.json"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("version"), "{}", stderr(&o));
}

#[test]
fn malformed_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), "{\n  \"runs\": \"many\"\n}\n").unwrap();
    let o = cotdr(&["repeatability", "--config", "bad.json", "--report", "r.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.json:2:"), "{}", stderr(&o));

    fs::write(dir.path().join("unknown.json"), "{\"runz\": 3}").unwrap();
    let o = cotdr(&["repeatability", "--config", "unknown.json", "--report", "r.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    fs::write(dir.path().join("neg.json"), "{\"runs\": 49, \"link\": {\"length\": -5.0}}").unwrap();
    let o = cotdr(&["repeatability", "--config", "neg.json", "--report", "r.json"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn missing_inputs_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = cotdr(&["repeatability", "--config", "absent.json", "--report", "r.json"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    fs::write(dir.path().join("c.json"), NOISELESS).unwrap();
    let o = cotdr(&["measure", "--config", "c.json", "--traces", "nowhere", "--report", "r.json"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn golay_text_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = cotdr(&["golay", "--order", "2"], dir.path());
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "+1 +1 +1 -1\n+1 +1 -1 +1\n");
    let o = cotdr(&["golay", "--order", "21"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
