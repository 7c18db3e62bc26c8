//! Helpers for driving the `sketchclip` binary.

use std::ffi::OsStr;
use std::fmt::Debug;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sketchclip::cli::{MANIFEST_FILE, SPLIT_FILE};
use sketchclip::sketch::synthetic::{write_corpus, SyntheticConfig};

use super::toy_raster;

pub fn sketchclip<S: AsRef<OsStr> + Debug>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sketchclip"))
        .args(args)
        .env_remove("SKETCHCLIP_CACHE")
        .output()
        .expect("binary runs")
}

pub fn ok<S: AsRef<OsStr> + Debug>(args: &[S]) -> String {
    let out = sketchclip(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes a corpus and prepares a split: circle and cross seen, zigzag unseen.
pub fn prepared(root: &Path) -> PathBuf {
    let raw = root.join("raw");
    let cfg = SyntheticConfig::new(&["circle", "cross", "zigzag"], 4, 7, toy_raster());
    write_corpus(&cfg, &raw, 32).unwrap();
    let data = root.join("data");
    ok(&[
        "prepare-data",
        "--adapter",
        "toy",
        "--tu",
        p(&raw.join("tu.ndjson")),
        "--qd",
        p(&raw.join("qd.ndjson")),
        "--edgemaps",
        p(&raw.join("edgemaps")),
        "--seen",
        "circle,cross",
        "--unseen",
        "zigzag",
        "--shots",
        "3",
        "--stroke-width",
        "1",
        "--out",
        p(&data),
    ]);
    data
}

/// Short toy `train` invocation; `extra` flag pairs replace or extend it.
pub fn train_args(data: &Path, out: &Path, extra: &[&str]) -> Vec<String> {
    let mut args: Vec<String> = [
        "train",
        "--adapter",
        "toy",
        "--manifest",
        p(&data.join(MANIFEST_FILE)),
        "--split",
        p(&data.join(SPLIT_FILE)),
        "--epochs",
        "2",
        "--lr",
        "0.01",
        "--batch-size",
        "18",
        "--prompt-depth",
        "2",
        "--seed",
        "3",
        "--out",
        p(out),
    ]
    .map(String::from)
    .to_vec();
    for pair in extra.chunks(2) {
        match args.iter().position(|a| a == pair[0]) {
            Some(i) => args[i + 1] = pair[1].to_string(),
            None => args.extend(pair.iter().map(|s| s.to_string())),
        }
    }
    args
}
