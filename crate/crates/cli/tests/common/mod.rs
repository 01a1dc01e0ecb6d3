#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_crowdtruth"));
    cmd.env("CROWDTRUTH_THREADS", "1");
    cmd
}

/// Runs the binary and panics with its stderr unless it succeeds.
pub fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "crowdtruth {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulates a small SDR dataset into `dir` and returns the responses and gold paths.
pub fn simulate(dir: &Path, seed: u64, extra: &[&str]) -> (PathBuf, PathBuf) {
    let seed = seed.to_string();
    let mut args = vec![
        "simulate", "--m", "2", "--workers", "12", "--questions", "24", "--k", "3",
        "--responses-per-question", "5", "--seed", &seed, "--out", path_str(dir),
    ];
    args.extend_from_slice(extra);
    run_ok(&args);
    (dir.join("responses.csv"), dir.join("gold.csv"))
}

/// Every file in `dir` with its bytes, sorted by name.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}
