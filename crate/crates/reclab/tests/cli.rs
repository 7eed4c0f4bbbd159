//! End-to-end tests of the `reclab` binary: command surface, exit codes,
//! output files, and byte-level reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn reclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reclab"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("reclab-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn list_systems_names_everything() {
    let out = reclab(&["list-systems"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in [
        "doubling", "lsv", "lorenz1d", "lorenz2d",
        "constant", "affine", "log_lorenz",
        "hit-survival", "poisson", "kac", "evl", "duality",
        "correlation", "short-returns", "tower-tail", "assumptions",
    ] {
        assert!(text.contains(needle), "listing lacks {needle}:\n{text}");
    }
}

#[test]
fn validate_prints_resolved_defaults() {
    let dir = temp_dir("validate");
    let config = write_config(
        &dir,
        "ok.toml",
        "experiment = \"kac\"\nsystem = \"doubling\"\nseed = 7\ncenter = 0.5\nradius = 0.1\nsamples = 500\n",
    );
    let out = reclab(&["validate", "--config", &config]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("validate should print JSON");
    // Defaults are filled in and echoed.
    assert_eq!(json["tolerance"], 0.02);
    assert_eq!(json["measure_samples"], 200_000);
    assert_eq!(json["system"], "doubling");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn config_errors_exit_two_and_name_the_problem() {
    let dir = temp_dir("errors");
    let cases = [
        // Unknown key.
        (
            "experiment = \"kac\"\nsystem = \"doubling\"\nseed = 1\ncenter = 0.5\nradius = 0.1\nsamples = 10\nwibble = 2\n",
            "wibble",
        ),
        // Missing seed.
        (
            "experiment = \"kac\"\nsystem = \"doubling\"\ncenter = 0.5\nradius = 0.1\nsamples = 10\n",
            "seed",
        ),
        // Unknown system.
        (
            "experiment = \"kac\"\nsystem = \"tent\"\nseed = 1\ncenter = 0.5\nradius = 0.1\nsamples = 10\n",
            "tent",
        ),
        // Radius outside the domain scale.
        (
            "experiment = \"kac\"\nsystem = \"doubling\"\nseed = 1\ncenter = 0.5\nradius = 0.7\nsamples = 10\n",
            "radius",
        ),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let config = write_config(&dir, &format!("bad{i}.toml"), text);
        for cmd in ["run", "validate"] {
            let out = reclab(&[cmd, "--config", &config]);
            assert_eq!(out.status.code(), Some(2), "case {i} ({cmd})");
            let err = String::from_utf8(out.stderr).unwrap();
            assert!(err.contains(needle), "case {i} ({cmd}) stderr lacks {needle}: {err}");
        }
    }
    // Unreadable path is also a config-stage failure.
    let out = reclab(&["run", "--config", dir.join("absent.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn run_writes_three_files_and_exits_zero() {
    let dir = temp_dir("run");
    let config = write_config(
        &dir,
        "kac.toml",
        "experiment = \"kac\"\nname = \"kac-small\"\nsystem = \"doubling\"\nseed = 21\ncenter = 0.5\nradius = 0.1\nsamples = 2000\nmeasure_samples = 50000\n",
    );
    let out_dir = dir.join("out");
    let out = reclab(&["run", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for suffix in ["data.csv", "plot.csv", "summary.json"] {
        let path = out_dir.join(format!("kac-small.{suffix}"));
        assert!(path.exists(), "missing {path:?}");
    }
    let plot = fs::read_to_string(out_dir.join("kac-small.plot.csv")).unwrap();
    assert!(plot.starts_with("x,empirical,predicted,ci\n"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("kac-small.summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["experiment"], "kac");
    assert_eq!(summary["config"]["samples"], 2000);
    // Verdict is data, not exit status.
    assert!(summary["passed"].is_boolean());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("kac-small.summary.json"), "stdout: {stdout}");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn simulation_failures_exit_one_and_clean_up() {
    let dir = temp_dir("simfail");
    // The box is wider than its height allows, caught only at run time.
    let config = write_config(
        &dir,
        "dirty.toml",
        "experiment = \"hit-survival\"\nname = \"dirty\"\nsystem = \"doubling\"\nseed = 3\ncenter = 0.3\ncenter_height = 0.05\nradius = 0.08\ntrajectories = 50\n",
    );
    let out_dir = dir.join("out");
    let out = reclab(&["run", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8(out.stderr).unwrap().is_empty());
    let leftovers: Vec<_> = match fs::read_dir(&out_dir) {
        Ok(entries) => entries.map(|e| e.unwrap().file_name()).collect(),
        Err(_) => Vec::new(),
    };
    assert!(leftovers.is_empty(), "partial outputs left: {leftovers:?}");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn reruns_and_worker_counts_give_identical_bytes() {
    let dir = temp_dir("determinism");
    let config = write_config(
        &dir,
        "hit.toml",
        "experiment = \"hit-survival\"\nname = \"det\"\nsystem = \"doubling\"\nseed = 99\ncenter = 0.37\nradius = 0.03\ntrajectories = 500\ny_max = 4.0\n",
    );
    let mut blobs = Vec::new();
    for (tag, workers) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let out_dir = dir.join(tag);
        let out = reclab(&[
            "run", "--config", &config,
            "--out", out_dir.to_str().unwrap(),
            "--workers", workers,
        ]);
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        blobs.push((
            fs::read(out_dir.join("det.data.csv")).unwrap(),
            fs::read(out_dir.join("det.plot.csv")).unwrap(),
        ));
    }
    assert_eq!(blobs[0], blobs[1], "re-run changed the outputs");
    assert_eq!(blobs[0], blobs[2], "worker count changed the outputs");
    let _ = fs::remove_dir_all(&dir);
}
