//! Helpers shared by the CLI test targets.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pcbdefect"));
    c.env_remove("PCBDEFECT_CONFIG");
    c
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON object")
}

/// A settings file shrinking the latent so sampling stays fast.
pub fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.cfg");
    std::fs::write(&p, "diffusion.latent_size = 16\nseed = 5\n").unwrap();
    p
}

/// A 16x16 board-like image for conditioning.
pub fn small_board(dir: &Path) -> PathBuf {
    let p = dir.join("small.pgm");
    let img = pcbdefect::image::GrayImage::from_fn(16, 16, |x, y| if (4..7).contains(&y) || (9..11).contains(&x) { 210 } else { 30 });
    img.write_pgm(&p).unwrap();
    p
}
