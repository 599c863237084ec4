#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn mcce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcce"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// Runs the binary and panics with its stderr unless it exits 0.
pub fn ok(args: &[&str]) -> String {
    let out = mcce(args);
    assert!(
        out.status.success(),
        "mcce {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn code(args: &[&str]) -> i32 {
    mcce(args).status.code().expect("exit code")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Four three-level attributes, one shared confounding coordinate.
pub fn synth_config(n: usize, seed: u64, logit_noise: f64) -> serde_json::Value {
    let levels = ["negative", "unknown", "positive"];
    let attributes: Vec<serde_json::Value> = ["ambiance", "food", "noise", "service"]
        .iter()
        .map(|a| serde_json::json!({"name": a, "levels": levels}))
        .collect();
    serde_json::json!({
        "n": n,
        "seed": seed,
        "attributes": attributes,
        "embedding_dim": 32,
        "require_recoverable": true,
        "n_classes": 5,
        "logit_noise": logit_noise,
        "edits_per_sample": 1
    })
}

pub fn write_config(dir: &Path, name: &str, config: &serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

pub struct Synth {
    pub dir: PathBuf,
    pub schema: PathBuf,
    pub samples: PathBuf,
    pub pairs: PathBuf,
    pub truth: PathBuf,
}

pub fn synth(dir: &Path, config: &serde_json::Value) -> Synth {
    let cfg = write_config(dir, "synth.json", config);
    let out = dir.join("data");
    ok(&["synth", "--config", s(&cfg), "--out", s(&out)]);
    Synth {
        schema: out.join("schema.json"),
        samples: out.join("samples.jsonl"),
        pairs: out.join("pairs.jsonl"),
        truth: out.join("ground_truth.json"),
        dir: out,
    }
}

pub fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect()
}
