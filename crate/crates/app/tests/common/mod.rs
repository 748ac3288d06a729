#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SPONSOR_Q: &str = "Which company sponsored the football game?";

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/hermetic")
        .join(name)
}

pub fn lore() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lore"));
    cmd.env_remove("LORE_CONFIG");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    lore().args(args).output().expect("lore binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Builds the hermetic fixture indexes into `dir`.
pub fn build_index(dir: &Path) -> Output {
    let out = run(&[
        "index",
        "--corpus",
        fixture("corpus.jsonl").to_str().unwrap(),
        "--embeddings",
        fixture("embeddings.jsonl").to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "index failed: {}", stderr(&out));
    out
}

/// `lore --config .. --index-dir .. --stub-table .. <args>` over the fixture.
pub fn run_stub(index: &Path, args: &[&str]) -> Output {
    lore()
        .arg("--config")
        .arg(fixture("config.json"))
        .arg("--index-dir")
        .arg(index)
        .arg("--stub-table")
        .arg(fixture("stub_table.jsonl"))
        .args(args)
        .output()
        .expect("lore binary runs")
}
