//! Behaviour of the `beltscan` binary.

use std::path::Path;
use std::process::{Command, Output};

use beltscan::scandir::{PoseRecord, POSES};

fn beltscan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beltscan"))
        .current_dir(dir)
        .env_remove("BELTSCAN_SEED")
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = beltscan(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn echoed_seed(stdout: &str) -> u64 {
    stdout.lines().find_map(|l| l.strip_prefix("seed: ")).unwrap().parse().unwrap()
}

fn printed(stdout: &str, label: &str) -> f64 {
    let line = stdout.lines().find(|l| l.starts_with(label)).unwrap_or_else(|| panic!("no {label:?} in {stdout}"));
    line[label.len()..].trim().trim_end_matches(" px").parse().unwrap()
}

#[test]
fn missing_surface_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = beltscan(dir.path(), &["simulate", "--frames", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
    assert!(err.contains("surface"), "{err}");
    assert!(!dir.path().join("scan").exists());
}

#[test]
fn bad_input_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = beltscan(dir.path(), &["markers", "encoder", "--scan", "nowhere"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out| ["simulate", "--surface", "hex", "--speed", "10", "--fps", "10", "--frames", "3", "--seed", "1", "--out", out];
    ok(dir.path(), &args("a"));
    ok(dir.path(), &args("b"));
    let mut names: Vec<_> = std::fs::read_dir(dir.path().join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 7);
    for n in names {
        let a = std::fs::read(dir.path().join("a").join(&n)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(&n)).unwrap();
        assert!(a == b, "{n:?} differs");
    }
}

#[test]
fn pose_spacing_follows_speed() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--surface", "flat", "--speed", "45", "--frames", "3", "--out", "s"]);
    let poses: Vec<PoseRecord> = serde_json::from_slice(&std::fs::read(dir.path().join("s").join(POSES)).unwrap()).unwrap();
    assert_eq!(poses.len(), 3);
    // 4.5 mm per frame at 0.25 mm per px.
    for w in poses.windows(2) {
        assert!((w[1].tx_px - w[0].tx_px - 18.0).abs() < 1e-9, "{poses:?}");
    }
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let sim = ["simulate", "--surface", "flat", "--frames", "1", "--out", "s"];
    assert_eq!(echoed_seed(&ok(dir.path(), &sim)), 0);

    let run_env = |extra: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_beltscan"))
            .current_dir(dir.path())
            .env("BELTSCAN_SEED", "9")
            .args(extra.iter().chain(&sim))
            .output()
            .unwrap();
        assert!(out.status.success());
        echoed_seed(&String::from_utf8(out.stdout).unwrap())
    };
    assert_eq!(run_env(&[]), 9);
    std::fs::write(dir.path().join("cfg.json"), r#"{"seed": 5}"#).unwrap();
    assert_eq!(run_env(&["--config", "cfg.json"]), 5);
    assert_eq!(run_env(&["--config", "cfg.json", "--seed", "4"]), 4);
}

#[test]
fn saved_config_replays() {
    let dir = tempfile::tempdir().unwrap();
    let first = ok(dir.path(), &["--seed", "3", "--save-config", "run.json", "simulate", "--surface", "sinusoid", "--frames", "2", "--out", "a"]);
    let second = ok(dir.path(), &["--config", "run.json", "simulate", "--out", "b"]);
    let config = |s: &str| s.lines().find(|l| l.starts_with("config: ")).unwrap().to_string();
    assert_eq!(config(&first), config(&second));
    assert_eq!(echoed_seed(&second), 3);
    for f in ["frame_000001.png", "poses.json", "scan.json"] {
        assert_eq!(std::fs::read(dir.path().join("a").join(f)).unwrap(), std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn oracle_grid_writes_exactly_its_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["evaluate", "--protocol", "grid", "--oracle", "--out", "e"]);
    assert!(out.contains("mean 1.00000"), "{out}");
    let mut names: Vec<_> = std::fs::read_dir(dir.path().join("e"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["accuracy_grid.csv", "accuracy_grid.png"]);
}

#[test]
fn evaluate_needs_a_gradient_source() {
    let dir = tempfile::tempdir().unwrap();
    let out = beltscan(dir.path(), &["evaluate", "--protocol", "grid"]);
    assert_eq!(out.status.code(), Some(2));
}

/// Calibrates once, then reconstructs a sphere and a fast scan with and without the marker prior.
#[test]
fn calibrate_then_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "1", "calibrate"]);
    assert!(d.join("gradient_model.json").is_file());

    ok(d, &["--seed", "2", "simulate", "--surface", "sphere", "--frames", "8", "--out", "sphere"]);
    let out = ok(d, &["reconstruct", "--scan", "sphere", "--model", "gradient_model.json", "--preview", "--out", "rs"]);
    let relief = printed(&out, "accuracy (relief pixels):");
    assert!(relief >= 0.97, "{out}");
    for f in ["global_normals.gbf1", "global_height.gbf1", "poses.csv", "encoder.csv", "preview.png"] {
        assert!(d.join("rs").join(f).is_file(), "{f}");
    }

    ok(d, &["--seed", "2", "simulate", "--surface", "pcb", "--speed", "45", "--frames", "12", "--out", "fast"]);
    let with = ok(d, &["reconstruct", "--scan", "fast", "--model", "gradient_model.json", "--out", "r1"]);
    let without = beltscan(d, &["reconstruct", "--scan", "fast", "--model", "gradient_model.json", "--no-marker-prior", "--out", "r2"]);
    assert!(without.status.success());
    let log = String::from_utf8_lossy(&without.stderr);
    assert!(log.contains("WARN") && log.contains("flow unreliable"), "{log}");
    let (e1, e2) = (
        printed(&with, "final pose error:"),
        printed(&String::from_utf8(without.stdout).unwrap(), "final pose error:"),
    );
    assert!(e1 < 0.5 && e2 > 10.0 * e1.max(0.1), "with prior {e1} px, without {e2} px");
    assert!(!d.join("r2").join("encoder.csv").exists());
}
