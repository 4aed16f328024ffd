//! Black-box tests of the command-line interface, driven through the
//! tiny printed-digit config so every case runs in seconds.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .nth(2)
        .unwrap()
        .to_path_buf()
}

fn expanse(args: &[&str], extra: &[(&str, PathBuf)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_expanse"));
    cmd.args(args).env("EXPANSE_DATA_DIR", root().join("data"));
    for (flag, value) in extra {
        cmd.arg(flag).arg(value);
    }
    cmd.output().unwrap()
}

fn run_smoke(out: &Path) -> Output {
    let cfg = root().join("configs/smoke.toml");
    expanse(
        &["run", cfg.to_str().unwrap()],
        &[("--out", out.to_path_buf())],
    )
}

#[test]
fn run_writes_checkpoint_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let result = run_smoke(&out);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    assert!(out.join("report.json").is_file());
    assert!(out.join("stage00-tiny.ckpt").is_file());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let stage = &report["stages"][0];
    assert_eq!(stage["name"], "tiny");
    assert!(stage["formatted"]["exemplary"].as_str().unwrap().ends_with('%'));
}

#[test]
fn missing_config_fails_with_error_line() {
    let result = expanse(&["run", "/nonexistent/nope.toml"], &[]);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.starts_with("error:"), "stderr was: {stderr}");
}

#[test]
fn unknown_config_field_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    let text = std::fs::read_to_string(root().join("configs/smoke.toml")).unwrap();
    std::fs::write(&cfg, text.replace("seed = 7", "seed = 7\nmystery_knob = 1")).unwrap();
    let result = expanse(&["run", cfg.to_str().unwrap()], &[]);
    assert!(!result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("mystery_knob"));
}

#[test]
fn seed_override_is_echoed_in_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = root().join("configs/smoke.toml");
    let result = expanse(
        &["run", cfg.to_str().unwrap(), "--seed", "4242"],
        &[("--out", out.to_path_buf())],
    );
    assert!(result.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["stages"][0]["seed"], 4242);
}

#[test]
fn eval_prints_accuracy_for_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert!(run_smoke(&out).status.success());
    let images = root().join("data/printed/printed-images-idx3-ubyte");
    let labels = root().join("data/printed/printed-labels-idx1-ubyte");
    let result = expanse(
        &[
            "eval",
            out.join("stage00-tiny.ckpt").to_str().unwrap(),
            images.to_str().unwrap(),
            labels.to_str().unwrap(),
        ],
        &[],
    );
    assert!(result.status.success());
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("accuracy:"), "stdout was: {stdout}");
    assert!(stdout.contains("samples:  180"));
}

#[test]
fn eval_rejects_class_count_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert!(run_smoke(&out).status.success());
    let images = root().join("data/printed/printed-images-idx3-ubyte");
    let labels = root().join("data/printed/printed-labels-idx1-ubyte");
    let result = expanse(
        &[
            "eval",
            out.join("stage00-tiny.ckpt").to_str().unwrap(),
            images.to_str().unwrap(),
            labels.to_str().unwrap(),
            "--classes",
            "12",
        ],
        &[],
    );
    assert!(!result.status.success());
}

#[test]
fn expand_writes_checkpoint_with_mask() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert!(run_smoke(&out).status.success());
    let expanded = tmp.path().join("expanded.ckpt");
    let result = expanse(
        &[
            "expand",
            out.join("stage00-tiny.ckpt").to_str().unwrap(),
            "--target",
            "784,32,10",
            "--seed",
            "3",
        ],
        &[("--out", expanded.clone())],
    );
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let (net, mask, _) = expanse::load_checkpoint(&expanded).unwrap();
    assert_eq!(net.spec().layer_sizes(), &[784, 32, 10]);
    let mask = mask.unwrap();
    assert_eq!(mask.frozen_count(), 784 * 16 + 16 + 16 * 10 + 10);
}

#[test]
fn expand_rejects_shrinking_target() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert!(run_smoke(&out).status.success());
    let result = expanse(
        &[
            "expand",
            out.join("stage00-tiny.ckpt").to_str().unwrap(),
            "--target",
            "784,8,10",
        ],
        &[("--out", tmp.path().join("x.ckpt"))],
    );
    assert!(!result.status.success());
}

#[test]
fn select_exemplars_writes_balanced_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let images = root().join("data/printed/printed-images-idx3-ubyte");
    let labels = root().join("data/printed/printed-labels-idx1-ubyte");
    let out_images = tmp.path().join("ex-images");
    let out_labels = tmp.path().join("ex-labels");
    let result = expanse(
        &[
            "select-exemplars",
            images.to_str().unwrap(),
            labels.to_str().unwrap(),
            "--per-class",
            "3",
        ],
        &[
            ("--out-images", out_images.clone()),
            ("--out-labels", out_labels.clone()),
        ],
    );
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let d = expanse::load_idx(&out_images, &out_labels, None).unwrap();
    assert_eq!(d.len(), 30);
    assert!(d.label_histogram().iter().all(|&c| c == 3));
}

#[test]
fn select_exemplars_rejects_oversized_request() {
    let tmp = tempfile::tempdir().unwrap();
    let images = root().join("data/printed/printed-images-idx3-ubyte");
    let labels = root().join("data/printed/printed-labels-idx1-ubyte");
    let result = expanse(
        &[
            "select-exemplars",
            images.to_str().unwrap(),
            labels.to_str().unwrap(),
            "--per-class",
            "999",
        ],
        &[
            ("--out-images", tmp.path().join("i")),
            ("--out-labels", tmp.path().join("l")),
        ],
    );
    assert!(!result.status.success());
}
