#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn ctxbound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxbound"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "0")
        .output()
        .expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Generates a dataset into `dir` and returns the (gt, det) paths.
pub fn synth(config: &Path, dir: &Path, extra: &[&str]) -> (String, String) {
    let mut args = vec![
        "synth",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let out = ctxbound(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    (
        dir.join("ground_truth.json").to_str().unwrap().to_string(),
        dir.join("detections.json").to_str().unwrap().to_string(),
    )
}

/// Data rows of a CSV report as string cells, header excluded.
pub fn rows(csv_text: &str) -> Vec<Vec<String>> {
    let body = ctxbound_cli::report::strip_manifest(csv_text);
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}
