//! End-to-end runs of the `sketchclip` binary on a synthetic corpus.

mod common;


use common::cli::*;
use common::*;
use sketchclip::cli::{RunConfig, CONFIG_ECHO, MANIFEST_FILE, SPLIT_FILE};
use sketchclip::train::{checkpoint_path, Checkpoint, EvalReport, TrainConfig};

#[test]
fn prepare_data_covers_every_source_and_is_reproducible() {
    let root = tempfile::tempdir().unwrap();
    let data = prepared(root.path());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.join(MANIFEST_FILE)).unwrap()).unwrap();
    let entries = manifest["samples"].as_array().unwrap();
    let mut cells = std::collections::BTreeSet::new();
    for e in entries {
        cells.insert((e["abstraction"].to_string(), e["category"].to_string()));
    }
    assert_eq!(cells.len(), 9, "3 sources x 3 categories");

    let first = std::fs::read(data.join(SPLIT_FILE)).unwrap();
    let again = prepared(&root.path().join("again"));
    assert_eq!(first, std::fs::read(again.join(SPLIT_FILE)).unwrap());
    let relocated = std::fs::read_to_string(again.join(MANIFEST_FILE))
        .unwrap()
        .replace(p(&root.path().join("again")), p(root.path()));
    assert_eq!(std::fs::read_to_string(data.join(MANIFEST_FILE)).unwrap(), relocated);

    let echo = RunConfig::load(&data.join(CONFIG_ECHO)).unwrap();
    assert_eq!(echo.data.seen_categories, names(&["circle", "cross"]));
    assert_eq!(echo.data.shots, 3);
}

#[test]
fn missing_input_exits_with_two_and_names_the_path() {
    let root = tempfile::tempdir().unwrap();
    let missing = root.path().join("nowhere.ndjson");
    let out = sketchclip(&[
        "prepare-data",
        "--adapter",
        "toy",
        "--tu",
        p(&missing),
        "--seen",
        "circle",
        "--out",
        p(&root.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.ndjson"));
}

#[test]
fn config_echo_records_defaults_and_overrides() {
    let root = tempfile::tempdir().unwrap();
    let data = prepared(root.path());
    let out = root.path().join("run");
    ok(&train_args(&data, &out, &["--epochs", "1", "--context-tokens", "2", "--prompt-depth", "1"]));
    let echo = RunConfig::load(&out.join(CONFIG_ECHO)).unwrap();
    assert_eq!(echo.train.context_tokens, 2);
    assert_eq!(echo.train.prompt_depth, 1);
    let ckpt = Checkpoint::load(&checkpoint_path(&out, 1)).unwrap();
    assert_eq!(ckpt.config.context_tokens, 2);
    assert_eq!(ckpt.config.prompt_depth, 1);
    assert_eq!(ckpt.prompts["prompts.text"].shape, vec![1, 2, 12]);

    let defaults = TrainConfig::default();
    assert_eq!(
        (defaults.prompt_depth, defaults.context_tokens, defaults.learning_rate, defaults.batch_size, defaults.epochs),
        (9, 5, 1e-4, 64, 7)
    );
    let text = RunConfig::default().to_toml().unwrap();
    for key in ["prompt_depth = 9", "context_tokens = 5", "learning_rate = 0.0001", "batch_size = 64", "epochs = 7"] {
        assert!(text.contains(key), "{key} missing from\n{text}");
    }
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let root = tempfile::tempdir().unwrap();
    let data = prepared(root.path());
    let cfg = root.path().join("run.toml");
    std::fs::write(&cfg, "epochs = 1\nbeta2 = 0.25\nno_such_key = 1\n").unwrap();
    let out = root.path().join("bad");
    let r = sketchclip(&["train", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("no_such_key"));

    std::fs::write(&cfg, "epochs = 5\nbeta2 = 0.25\n").unwrap();
    let out = root.path().join("run");
    let cfg_path = p(&cfg).to_owned();
    ok(&train_args(&data, &out, &["--config", &cfg_path, "--epochs", "1"]));
    let echo = RunConfig::load(&out.join(CONFIG_ECHO)).unwrap();
    assert_eq!(echo.train.epochs, 1);
    assert_eq!(echo.train.beta2, 0.25);
}

#[test]
fn eval_writes_report_plots_and_rejects_empty_unseen() {
    let root = tempfile::tempdir().unwrap();
    let data = prepared(root.path());
    let run = root.path().join("run");
    ok(&train_args(&data, &run, &[]));
    let ckpt = checkpoint_path(&run, 2);
    let eval = root.path().join("eval");
    let stdout = ok(&["eval", "--checkpoint", p(&ckpt), "--manifest", p(&data.join(MANIFEST_FILE)), "--split", p(&data.join(SPLIT_FILE)), "--which", "seen", "--out", p(&eval)]);
    assert!(stdout.starts_with("seen top-1 "));
    for f in ["eval_report.json", "predictions.csv", "per_category.csv", "per_source.csv"] {
        assert!(std::fs::metadata(eval.join(f)).unwrap().len() > 0, "{f}");
    }
    for svg in ["accuracy_vs_abstraction.svg", "membership_histogram.svg"] {
        let text = std::fs::read_to_string(eval.join(svg)).unwrap();
        assert!(text.contains("<svg") && text.contains("<rect"), "{svg}");
    }
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(eval.join("eval_report.json")).unwrap()).unwrap();
    assert_eq!(report.membership_histogram.iter().map(|b| b.count).sum::<usize>(), report.samples);
    let predictions = std::fs::read_to_string(eval.join("predictions.csv")).unwrap();
    assert_eq!(predictions.lines().count(), report.samples + 1);

    let unseen = ok(&["eval", "--checkpoint", p(&ckpt), "--manifest", p(&data.join(MANIFEST_FILE)), "--split", p(&data.join(SPLIT_FILE)), "--out", p(&root.path().join("u"))]);
    assert!(unseen.starts_with("unseen top-1 100"), "{unseen}");

    let closed = root.path().join("closed");
    ok(&[
        "prepare-data",
        "--adapter",
        "toy",
        "--tu",
        p(&root.path().join("raw/tu.ndjson")),
        "--seen",
        "circle,cross",
        "--shots",
        "2",
        "--out",
        p(&closed),
    ]);
    let r = sketchclip(&["eval", "--checkpoint", p(&ckpt), "--manifest", p(&closed.join(MANIFEST_FILE)), "--split", p(&closed.join(SPLIT_FILE)), "--which", "unseen", "--out", p(&root.path().join("e2"))]);
    assert_eq!(r.status.code(), Some(2));

    let r = sketchclip(&["eval", "--checkpoint", p(&ckpt), "--adapter", "toy:1", "--manifest", p(&data.join(MANIFEST_FILE)), "--split", p(&data.join(SPLIT_FILE)), "--out", p(&root.path().join("e3"))]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_three() {
    let root = tempfile::tempdir().unwrap();
    let data = prepared(root.path());
    let r = sketchclip(&train_args(&data, &root.path().join("run"), &["--lr", "1e250", "--epochs", "4"]));
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stderr).contains("non-finite"));
}

#[test]
fn invalid_flags_are_rejected_and_help_lists_them() {
    let r = sketchclip(&["train", "--no-such-flag"]);
    assert_ne!(r.status.code(), Some(0));
    let r = sketchclip(&["train", "--lr", "-1", "--out", "/tmp/x"]);
    assert_eq!(r.status.code(), Some(2));
    let help = ok(&["train", "--help"]);
    for flag in [
        "--prompt-depth",
        "--context-tokens",
        "--beta1",
        "--beta2",
        "--beta3",
        "--alpha",
        "--no-meta-net",
        "--no-layer-norm",
        "--no-codebook",
        "--no-mixup",
        "--no-sketch2vec",
        "--config",
        "--adapter",
    ] {
        assert!(help.contains(flag), "{flag}");
    }
    let top = ok(&["--help"]);
    for cmd in ["prepare-data", "train", "eval", "predict"] {
        assert!(top.contains(cmd));
    }
}

#[test]
fn predict_is_deterministic_and_single_category_is_certain() {
    let root = tempfile::tempdir().unwrap();
    let data = prepared(root.path());
    let run = root.path().join("run");
    ok(&train_args(&data, &run, &[]));
    let ckpt = checkpoint_path(&run, 2);
    let strokes = root.path().join("raw/qd.ndjson");
    let args = ["predict", "--checkpoint", p(&ckpt), "--strokes", p(&strokes), "--record", "1", "--decode"];
    let first = ok(&args);
    assert_eq!(first, ok(&args));
    let json: serde_json::Value = serde_json::from_str(&first).unwrap();
    let total: f64 = json["top"].as_array().unwrap().iter().map(|r| r["probability"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-6);
    assert!(json["decoded"].as_array().is_some_and(|d| !d.is_empty()));

    let png = std::fs::read_dir(root.path().join("raw/edgemaps/circle")).unwrap().next().unwrap().unwrap().path();
    let single = ok(&["predict", "--checkpoint", p(&ckpt), "--image", p(&png), "--categories", "circle"]);
    let json: serde_json::Value = serde_json::from_str(&single).unwrap();
    assert_eq!(json["top"][0]["probability"].as_f64(), Some(1.0));

    let r = sketchclip(&["predict", "--checkpoint", p(&root.path().join("none.json")), "--image", p(&png)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("none.json"));
}
