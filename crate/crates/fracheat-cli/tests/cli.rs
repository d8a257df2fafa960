//! End-to-end checks of the binary: exit codes, determinism, precedence.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fracheat"))
}

fn write_config(dir: &Path, h: f64) -> std::path::PathBuf {
    let path = dir.join("cfg.toml");
    fs::write(
        &path,
        format!("[model]\nspectrum = \"white\"\nh = {h}\n\n[run]\nseed = 5\nreplicas = 4\n"),
    )
    .unwrap();
    path
}

#[test]
fn nonexistent_model_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.25);
    let out = bin()
        .args(["spectrum", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nonexistent"), "stderr: {stderr}");
}

#[test]
fn metric_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.5);
    for sub in ["a", "b"] {
        let status = bin()
            .args(["metric", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(sub))
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = fs::read(dir.path().join("a/metric.csv")).unwrap();
    let b = fs::read(dir.path().join("b/metric.csv")).unwrap();
    assert_eq!(a, b);
    // manifests agree on the config hash and file checksums
    let read = |p: &str| -> serde_json::Value {
        serde_json::from_slice(&fs::read(dir.path().join(p)).unwrap()).unwrap()
    };
    let (ma, mb) = (read("a/manifest.json"), read("b/manifest.json"));
    assert_eq!(ma["config_sha256"], mb["config_sha256"]);
    assert_eq!(ma["files"], mb["files"]);
}

#[test]
fn flag_seed_beats_env_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.5);
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--seed", "7", "--out"])
        .arg(dir.path().join("o"))
        .env("FRACHEAT_SEED", "99")
        .status()
        .unwrap();
    assert!(status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
}

#[test]
fn invalid_config_exits_2_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[model\nspectrum = white").unwrap();
    let out = bin()
        .args(["metric", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 1"), "stderr: {stderr}");
}

#[test]
fn hit_emits_csv_and_manifest_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.5);
    let status = bin()
        .args(["hit", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(dir.path().join("o/hit.csv")).unwrap();
    assert!(csv.starts_with("target_id,eps,p_hat_lo"));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("o/manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["path"] == "hit.csv"));
    // checksum in the manifest matches the artifact on disk
    use sha2::{Digest, Sha256};
    let sum = format!("{:x}", Sha256::digest(csv.as_bytes()));
    let entry = files.iter().find(|f| f["path"] == "hit.csv").unwrap();
    assert_eq!(entry["sha256"], serde_json::Value::String(sum));
}
