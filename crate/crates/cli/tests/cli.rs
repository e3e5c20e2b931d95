//! Black-box tests of the `ivec` binary: stage-by-stage runs, config
//! handling, and error reporting.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn ivec(args: &[&str], workdir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ivec"))
        .args(args)
        .arg("--workdir")
        .arg(workdir)
        .output()
        .expect("failed to spawn ivec")
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    let config = serde_json::json!({
        "synth": {
            "num_speakers": 24,
            "utterances_per_speaker": 6,
            "min_frames": 50,
            "max_frames": 80,
            "feature_dim": 6,
            "num_components": 6,
            "speaker_dim": 5,
            "channel_dim": 3,
            "speaker_scale": 1.0,
            "channel_scale": 0.4,
            "noise_scale": 1.0,
            "seed": 7
        },
        "eval_speakers": 8,
        "n_target_trials": 120,
        "n_nontarget_trials": 120,
        "trial_seed": 99,
        "ubm_components": 6,
        "ubm_iterations": 3,
        "relevance_factor": 1.0,
        "tvm": {
            "d": 10,
            "iterations": 3,
            "max_principle": "One",
            "seed": 0,
            "method": "ppca",
            "beta": 1.0
        },
        "plda_rank": 6,
        "plda_iterations": 6,
        "seed": 5,
        "threads": 1,
        "reproducible": true
    });
    std::fs::write(&path, config.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn stages_run_in_sequence_and_produce_metrics() {
    let dir = tempdir().unwrap();
    let config = tiny_config(dir.path());
    for stage in [
        "synth",
        "train-ubm",
        "stats",
        "supervectors",
        "train-tvm",
        "extract",
        "train-backend",
        "score",
        "evaluate",
    ] {
        let out = ivec(&[stage, "--config", &config], dir.path());
        assert!(
            out.status.success(),
            "stage {stage} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let metrics = std::fs::read_to_string(dir.path().join("metrics.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&metrics).unwrap();
    assert_eq!(parsed["method"], "ppca");
    assert!(parsed["eer_percent"].as_f64().unwrap() < 50.0);
}

#[test]
fn run_all_honors_method_override() {
    let dir = tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = ivec(&["run-all", "--config", &config, "--method", "fa"], dir.path());
    assert!(
        out.status.success(),
        "run-all failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let metrics = std::fs::read_to_string(dir.path().join("metrics.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&metrics).unwrap();
    assert_eq!(parsed["method"], "fa");
}

#[test]
fn missing_upstream_artifact_is_a_clear_error() {
    let dir = tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = ivec(&["train-tvm", "--config", &config], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("missing upstream artifact"),
        "unexpected stderr: {stderr}"
    );
}

#[test]
fn unknown_method_is_rejected() {
    let dir = tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = ivec(
        &["run-all", "--config", &config, "--method", "kazoo"],
        dir.path(),
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown method"), "unexpected stderr: {stderr}");
}

#[test]
fn benchmark_emits_json_report() {
    let dir = tempdir().unwrap();
    let output = dir.path().join("bench.json");
    let out = Command::new(env!("CARGO_BIN_EXE_ivec"))
        .args([
            "benchmark",
            "--methods",
            "ppca,fa",
            "--u",
            "60",
            "--c",
            "4",
            "--f",
            "4",
            "--d",
            "8",
            "--iterations",
            "1",
            "--output",
        ])
        .arg(&output)
        .output()
        .expect("failed to spawn ivec");
    assert!(
        out.status.success(),
        "benchmark failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&output).unwrap()).unwrap();
    assert_eq!(report["u"], 60);
    let methods = report["methods"].as_array().unwrap();
    assert_eq!(methods.len(), 2);
    for timing in methods {
        assert!(timing["seconds_per_iteration"].as_f64().unwrap() > 0.0);
    }
}
