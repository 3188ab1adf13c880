use std::path::Path;
use std::process::{Command, Output};

fn ringfwm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ringfwm"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

const SMALL: [&str; 4] = ["--grid-points", "31", "--jobs", "1"];

fn args<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend(SMALL);
    v.extend(extra);
    v
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn calibrate_writes_a_record_consumed_by_later_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cal = dir.path().join("cal");
    let o = ringfwm(&args("calibrate", &["--engine", "perturbative"]), &cal);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let record: serde_json::Value = serde_json::from_str(&read(&cal.join("calibration.json"))).unwrap();
    let strength = record["strength"].as_f64().unwrap();
    assert!(strength > 0.0);
    assert!((record["pair_probability"].as_f64().unwrap() - 0.01265).abs() < 1e-5);

    let cfg = dir.path().join("cfg.json");
    let file = cal.join("calibration.json");
    std::fs::write(&cfg, serde_json::json!({ "calibration": { "file": file } }).to_string()).unwrap();
    let run = dir.path().join("scenario");
    let o = ringfwm(&args("scenario", &["--engine", "perturbative", "--config", cfg.to_str().unwrap()]), &run);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&read(&run.join("manifest.json"))).unwrap();
    assert_eq!(manifest["strength"].as_f64().unwrap(), strength);
    let metrics = read(&run.join("metrics.csv"));
    let row: Vec<&str> = metrics.lines().nth(1).unwrap().split(',').collect();
    let pp: f64 = row[2].parse().unwrap();
    assert!((pp - 0.01265).abs() < 1e-5, "pair probability {pp}");
}

#[test]
fn rerunning_from_a_manifest_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"ensemble": {"n_samples": 4}}"#).unwrap();
    let with_cfg = |name: &str| {
        let out = dir.path().join(name);
        let o = ringfwm(
            &args(
                "ensemble",
                &["--engine", "perturbative", "--strength", "0.1", "--seed", "5", "--config", cfg.to_str().unwrap()],
            ),
            &out,
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = with_cfg("b");
    let manifest = a.join("manifest.json");
    let again = dir.path().join("c");
    let o = ringfwm(&["ensemble", "--config", manifest.to_str().unwrap()], &again);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["samples.csv", "metrics.csv", "histograms.csv", "summary.json"] {
        assert_eq!(read(&a.join(f)), read(&again.join(f)), "{f}");
    }
    let samples = read(&a.join("samples.csv"));
    assert_eq!(samples.lines().count(), 5);
}

#[test]
fn scenario_exports_documented_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = ringfwm(&args("scenario", &["--strength", "0.1"]), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.csv", "lineshapes.csv", "jsa_ff.csv", "jta_ff.csv", "transmission_p.csv", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    // No backward pump without back-scattering, so no b-b pairs to export.
    assert!(!dir.path().join("jsa_bb.csv").exists());
    let manifest: serde_json::Value = serde_json::from_str(&read(&dir.path().join("manifest.json"))).unwrap();
    assert_eq!(manifest["columns"]["jsa_ff.csv"], serde_json::json!(["k_signal", "k_idler", "re", "im"]));
    assert_eq!(read(&dir.path().join("jsa_ff.csv")).lines().count(), 1 + 31 * 31);
}

#[test]
fn config_errors_have_their_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"sweep": {"parameter": "pump.q"}}"#).unwrap();
    let o = ringfwm(&args("sweep", &["--config", cfg.to_str().unwrap(), "--strength", "0.1"]), dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = ringfwm(&args("scenario", &["--config", "/definitely/not/here.json"]), dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn calibration_failure_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    // A pair probability far outside the low-gain regime cannot be bracketed
    // around the first-order estimate.
    std::fs::write(&cfg, r#"{"calibration": {"target": 0.8}}"#).unwrap();
    let o = ringfwm(&args("calibrate", &["--config", cfg.to_str().unwrap()]), dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_reports_each_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"sweep": {"parameter": "pump.g", "values": [0.0, 2e10], "export_points": [1]}}"#,
    )
    .unwrap();
    let o = ringfwm(&args("sweep", &["--config", cfg.to_str().unwrap(), "--strength", "0.1"]), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = read(&dir.path().join("metrics.csv"));
    let rows: Vec<&str> = metrics.lines().collect();
    assert_eq!(rows.len(), 3);
    // b-b pairs need a backward pump: absent at g_p = 0, present once split.
    assert!(rows[1].ends_with(",,0.00000000000000000e0"));
    // Pump splitting alone opens no f-b channel.
    let split: Vec<&str> = rows[2].split(',').collect();
    assert_eq!(split[3], "");
    assert!(split[5].parse::<f64>().unwrap() > 0.5);
    assert!(dir.path().join("sweep_pump.g_2.00000000000000000e10_jsa_bb.csv").exists());
}
