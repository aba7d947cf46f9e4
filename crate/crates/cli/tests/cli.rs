use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sdeim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdeim")).args(args).output().expect("spawn sdeim")
}

fn ok(args: &[&str]) -> Output {
    let out = sdeim(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn columns(path: &Path) -> Vec<usize> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.is_empty() && !l.starts_with(|c: char| c.is_ascii_alphabetic()))
        .map(|l| l.split(',').count())
        .collect()
}

#[test]
fn generate_writes_time_plus_state_columns() {
    let dir = tempfile::tempdir().unwrap();
    let l63 = dir.path().join("l63");
    let l96 = dir.path().join("l96");
    ok(&["generate", "--preset", "lorenz63", "--out", l63.to_str().unwrap()]);
    ok(&["generate", "--preset", "lorenz96", "--out", l96.to_str().unwrap()]);
    for (d, width) in [(&l63, 4), (&l96, 41)] {
        for file in ["train.csv", "test.csv"] {
            let cols = columns(&d.join(file));
            assert!(cols.len() > 100);
            assert!(cols.iter().all(|&c| c == width), "{file}: expected {width} columns");
        }
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["pipeline", "--preset", "lorenz63-noisy", "--seed", "7", "--out", d.to_str().unwrap()]);
    }
    for file in ["summary.json", "train.csv", "test.csv", "observations.csv", "errors_dasdeim.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let c = dir.path().join("c");
    ok(&["pipeline", "--preset", "lorenz63-noisy", "--seed", "8", "--out", c.to_str().unwrap()]);
    assert_ne!(fs::read(a.join("observations.csv")).unwrap(), fs::read(c.join("observations.csv")).unwrap());
}

#[test]
fn pipeline_summary_has_the_reported_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["pipeline", "--preset", "lorenz96", "--out", dir.path().to_str().unwrap()]);
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let written: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(printed, written);
    for key in ["vanilla_mean_rel_err", "dasdeim_post_transient_mean", "sensor_indices", "sigma5", "sigma6", "prefactor_curve"] {
        assert!(written.get(key).is_some(), "missing {key}");
    }
    assert_eq!(written["sensor_indices"], serde_json::json!([0]));
    let curve = fs::read_to_string(dir.path().join("prefactor_curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("m,fixed_sensors,replaced_sensors"));
    assert_eq!(curve.lines().count(), 6);
}

#[test]
fn each_stage_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 4] = [
        ("pod", &["basis.csv", "singular_values.csv", "basis_offset.csv"]),
        ("place", &["sensors.csv"]),
        ("reconstruct", &["observations.csv", "errors_vanilla.csv", "reconstruction_vanilla.csv"]),
        ("assimilate", &["xi_path.csv", "errors_dasdeim.csv", "reconstruction_dasdeim.csv"]),
    ];
    for (cmd, files) in cases {
        let d = dir.path().join(cmd);
        ok(&[cmd, "--preset", "lorenz63", "--out", d.to_str().unwrap()]);
        for f in files {
            assert!(d.join(f).exists(), "{cmd} did not write {f}");
        }
        assert!(!d.join("summary.json").exists());
    }
    assert_eq!(fs::read_to_string(dir.path().join("place/sensors.csv")).unwrap().trim(), "1");
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"system": "lorenz63", "m": 2, "n": 1, "train_horizon": 10, "test_horizon": 4, "spinup": 5}"#,
    )
    .unwrap();
    let out = ok(&["pipeline", "--config", cfg.to_str().unwrap(), "--noise-std", "0.3", "--out", dir.path().join("o").to_str().unwrap()]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["noise_std"], 0.3);
    assert_eq!(summary["m"], 2);

    fs::write(&cfg, r#"{"system": "lorenz63", "m": 2, "n": 3}"#).unwrap();
    let bad = sdeim(&["pipeline", "--config", cfg.to_str().unwrap()]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));
    assert!(!sdeim(&["pipeline", "--preset", "nope"]).status.success());
    assert!(!sdeim(&["pipeline"]).status.success());
}

#[test]
fn properties_report_and_negative_control() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["properties", "--out", dir.path().to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], true);
    let suites = report["suites"].as_array().unwrap();
    assert_eq!(suites.len(), 7);
    assert!(suites.iter().all(|s| s["cases"].as_u64().unwrap() > 0 && s["failures"] == 0));
    assert!(dir.path().join("properties.json").exists());

    let bad = sdeim(&["properties", "--corrupt-basis"]);
    assert_eq!(bad.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(report["passed"], false);
    let failed: Vec<_> = report["suites"].as_array().unwrap().iter().filter(|s| s["passed"] == false).collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0]["name"], "pod-basis");
}
