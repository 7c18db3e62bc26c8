//! Acceptance suite: one verdict line per criterion on stderr.
//!
//! The two slow jobs are ignored by default:
//!
//! cargo test --release -p sketchclip --test acceptance -- --ignored --nocapture

mod common;
#[path = "gradients.rs"]
mod gradients;

use std::io::Write;
use std::panic::catch_unwind;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use candle_core::{DType, Device, Tensor};
use common::cli::*;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchclip::backbone::toy::toy_backbone;
use sketchclip::backbone::{load_pretrained, CLIP_ADAPTER};
use sketchclip::cli::{resolve_weights, MANIFEST_FILE, SPLIT_FILE};
use sketchclip::codebook::{codebook_loss, mixup_loss, one_hot_labels, sample_mix_coefficients};
use sketchclip::nn::{scalar_f64, softmax_last};
use sketchclip::sketch::synthetic::{generate, SyntheticConfig};
use sketchclip::sketch::{Abstraction, DatasetSplit, Manifest};
use sketchclip::train::{checkpoint_path, evaluate, predict, select, train, Model, OverlapBenchmark, TrainConfig};

fn verdict(criterion: u32, pass: bool, detail: &str) {
    // written past the test harness capture so the line is always visible
    let _ = writeln!(
        std::io::stderr(),
        "criterion {criterion}: {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion}: {detail}");
}

/// Runs named checks, returning the failures and the elapsed time.
fn run_checks(checks: &[(&str, fn())]) -> (Vec<String>, Duration) {
    let start = Instant::now();
    let failed = checks
        .iter()
        .filter(|(_, check)| catch_unwind(*check).is_err())
        .map(|(name, _)| name.to_string())
        .collect();
    (failed, start.elapsed())
}

#[test]
#[ignore = "needs pretrained weights and a prepared 20+20 category corpus"]
fn criterion_1_joint_training_beats_single_sources() {
    let Some(dir) = std::env::var_os("SKETCHCLIP_JOINT_DATA").map(PathBuf::from) else {
        let _ = writeln!(
            std::io::stderr(),
            "criterion 1: SKIPPED set SKETCHCLIP_JOINT_DATA to a prepare-data output and SKETCHCLIP_CACHE to the weights"
        );
        return;
    };
    let pool = Manifest::load(&dir.join(MANIFEST_FILE)).unwrap().materialize().unwrap();
    let split = DatasetSplit::load(&dir.join(SPLIT_FILE)).unwrap();
    let train_set = select(&pool, &split.train_samples).unwrap();
    let eval_set = select(&pool, &split.eval_seen_samples).unwrap();
    let weights = resolve_weights(CLIP_ADAPTER, None);

    let accuracy = |source: Option<Abstraction>| {
        let subset: Vec<_> = train_set
            .iter()
            .copied()
            .filter(|s| source.is_none_or(|a| s.abstraction == a))
            .collect();
        let backbone = load_pretrained(CLIP_ADAPTER, weights.as_deref()).unwrap();
        let model = Model::new(backbone, TrainConfig::default()).unwrap();
        train(&model, &subset, &split.seen_categories, None).unwrap();
        evaluate(&model, &eval_set, &split.seen_categories).unwrap().top1
    };
    let joint = accuracy(None);
    let singles: Vec<(Abstraction, f64)> = Abstraction::ALL.iter().map(|&a| (a, accuracy(Some(a)))).collect();
    let detail = singles
        .iter()
        .map(|(a, acc)| format!("{} {acc:.2}%", a.source_tag()))
        .collect::<Vec<_>>()
        .join(", ");
    let pass = singles.iter().all(|(_, acc)| joint >= acc + 1.0);
    verdict(1, pass, &format!("joint {joint:.2}% vs {detail}"));
}

#[test]
fn criterion_2_oracle_equivalence() {
    let (failed, elapsed) = run_checks(&[
        ("image encoder", oracle::image_encoder_with_deep_prompts_matches_reference),
        ("image encoder without prompts", oracle::image_encoder_zero_prompts_is_the_plain_forward),
        ("text encoder", oracle::text_encoder_with_deep_prompts_matches_reference),
        ("text encoder without prompts", oracle::text_encoder_zero_prompts_and_distinct_categories),
        ("class probability", oracle::classification_probability_matches_eq1),
        ("class probability by hand", oracle::classification_of_a_text_feature_by_direct_evaluation),
        ("codebook and mixup losses", oracle::codebook_and_mixup_losses_match_reference),
        ("mixup feature", oracle::mixup_feature_matches_weighted_sum),
        ("abstraction prompt", oracle::abstraction_prompt_matches_weighted_sum),
        ("sketch2vec", oracle::teacher_forced_decoding_and_sketch2vec_loss_match_reference),
        ("sketch2vec by hand", oracle::sketch2vec_single_point_arithmetic),
        ("full chain", oracle::classification_pipeline_matches_reference_chain),
    ]);
    let pass = failed.is_empty() && elapsed < Duration::from_secs(10);
    verdict(2, pass, &format!("12 checks within 1e-6 in {:.2}s, failed {failed:?}", elapsed.as_secs_f64()));
}

#[test]
fn criterion_3_gradient_checks() {
    let (failed, elapsed) = run_checks(&[
        ("meta-net", gradients::meta_net_gradients),
        ("meta-net input", gradients::meta_net_input_gradient),
        ("prompts and codes", gradients::prompt_and_codebook_code_gradients),
        ("total loss", gradients::total_loss_gradients_through_every_term),
        ("codebook classifier", gradients::codebook_classifier_gradients),
        ("decoder", gradients::decoder_gradients_on_two_steps),
        ("frozen weights", gradients::frozen_weights_receive_no_gradient_and_prompts_do),
    ]);
    let pass = failed.is_empty() && elapsed < Duration::from_secs(30);
    verdict(3, pass, &format!("7 checks within 1e-4 relative in {:.2}s, failed {failed:?}", elapsed.as_secs_f64()));
}

#[test]
fn criterion_4_frozen_backbone() {
    let samples = toy_corpus(&["circle", "cross", "zigzag"], 4, 1);
    let refs: Vec<_> = samples.iter().collect();
    let cats = names(&["circle", "cross", "zigzag"]);
    let mut details = Vec::new();
    let mut pass = true;
    for layer_norm in [true, false] {
        let config = TrainConfig {
            layer_norm,
            epochs: 5,
            ..toy_config()
        };
        let model = Model::new(toy_backbone(0).unwrap(), config).unwrap();
        let frozen = model.backbone.frozen_snapshot().unwrap();
        let norms = model.backbone.layer_norm_snapshot().unwrap();
        train(&model, &refs, &cats, None).unwrap();
        let change = |a: &[(String, Vec<f64>)], b: &[(String, Vec<f64>)]| {
            a.iter().zip(b).map(|(x, y)| max_abs_diff(&x.1, &y.1)).fold(0.0, f64::max)
        };
        let frozen_change = change(&frozen, &model.backbone.frozen_snapshot().unwrap());
        let norm_change = change(&norms, &model.backbone.layer_norm_snapshot().unwrap());
        pass &= frozen_change == 0.0 && (layer_norm || norm_change == 0.0);
        details.push(format!(
            "layer norm {}: frozen {frozen_change:e}, layer norms {norm_change:.3e}",
            if layer_norm { "on" } else { "off" }
        ));
    }
    verdict(4, pass, &details.join("; "));
}

#[test]
fn criterion_5_simplex_and_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 100_000;
    let draws: Vec<[f64; 3]> = (0..n).map(|_| sample_mix_coefficients(1.0, &mut rng).unwrap().lambda).collect();
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for k in 0..3 {
        let mean = draws.iter().map(|d| d[k]).sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d[k] - mean).powi(2)).sum::<f64>() / n as f64;
        worst_mean = worst_mean.max((mean - 1.0 / 3.0).abs());
        worst_var = worst_var.max((var - 0.0556).abs());
    }

    let mut sums: Vec<f64> = draws.iter().map(|d| d.iter().sum()).collect();
    let samples = toy_corpus(&["circle", "cross", "zigzag"], 3, 2);
    let refs: Vec<_> = samples.iter().collect();
    let cats = names(&["circle", "cross", "zigzag"]);
    let model = Model::new(toy_backbone(0).unwrap(), toy_config()).unwrap();
    train(&model, &refs, &cats, None).unwrap();
    let report = evaluate(&model, &refs, &cats).unwrap();
    sums.extend(report.predictions.iter().map(|p| p.distribution.unwrap().iter().sum::<f64>()));
    let (logits, dist) = model.classify(&model.image_batch(&refs).unwrap(), &model.tokenize(&cats).unwrap()).unwrap();
    for t in [softmax_last(&logits).unwrap(), dist.unwrap()] {
        sums.extend(matrix(&t).iter().map(|r| r.iter().sum::<f64>()));
    }
    for s in &samples {
        let p = predict(&model, &s.raster, &cats, 3, false).unwrap();
        sums.push(p.top.iter().map(|r| r.probability).sum());
        sums.push(p.abstraction.unwrap().iter().sum());
    }
    let worst_sum = sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);

    let pass = worst_mean <= 0.01 && worst_var <= 0.005 && worst_sum <= 1e-6;
    verdict(
        5,
        pass,
        &format!(
            "Dirichlet mean off by {worst_mean:.4}, variance off by {worst_var:.4}; {} probability vectors, worst sum error {worst_sum:.1e}",
            sums.len()
        ),
    );
}

#[test]
fn criterion_6_toy_overfit() {
    let names_ = ["circle", "cross", "zigzag"];
    let samples = generate(&SyntheticConfig::new(&names_, 10, 7, toy_raster())).unwrap();
    let refs: Vec<_> = samples.iter().collect();
    let cats = names(&names_);
    let config = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 30,
        epochs: 200,
        prompt_depth: 2,
        decoder_hidden: 16,
        max_decode_steps: 48,
        checkpoint_every: usize::MAX,
        ..Default::default()
    };
    let model = Model::new(toy_backbone(0).unwrap(), config).unwrap();
    let start = Instant::now();
    train(&model, &refs, &cats, None).unwrap();
    let elapsed = start.elapsed();
    let report = evaluate(&model, &refs, &cats).unwrap();
    let abstraction = report.abstraction_accuracy.unwrap();
    let pass = report.top1 >= 95.0 && abstraction >= 95.0 && elapsed < Duration::from_secs(300);
    verdict(
        6,
        pass,
        &format!(
            "{} samples, top-1 {:.2}%, abstraction {abstraction:.2}% after 200 epochs in {:.0}s",
            samples.len(),
            report.top1,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_7_consistency_reduction() {
    let model = Model::new(toy_backbone(0).unwrap(), toy_config()).unwrap();
    let cb = model.codebook.as_ref().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut exact = true;
    for _ in 0..20 {
        let b = rng.random_range(1..9);
        let f: Vec<f64> = (0..b * 8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let dist = cb.predict(&Tensor::from_vec(f, (b, 8), &Device::Cpu).unwrap()).unwrap();
        let levels: Vec<Abstraction> = (0..b).map(|_| Abstraction::ALL[rng.random_range(0..3)]).collect();
        let onehot = one_hot_labels(&levels, &Device::Cpu, DType::F64).unwrap();
        let mix = scalar_f64(&mixup_loss(&dist, &onehot).unwrap()).unwrap();
        let cbl = scalar_f64(&codebook_loss(&dist, &levels).unwrap()).unwrap();
        exact &= mix.to_bits() == cbl.to_bits();
    }
    let onehot = one_hot_labels(&Abstraction::ALL, &Device::Cpu, DType::F64).unwrap();
    let eta = vals(&cb.abstraction_prompt(&onehot).unwrap());
    let codes_equal = eta == vals(cb.codes.as_tensor());
    verdict(
        7,
        exact && codes_equal,
        &format!("mixup(one-hot) == codebook loss bitwise: {exact}; eta(one-hot) == codes: {codes_equal}"),
    );
}

#[test]
#[ignore = "ten 200-epoch training runs"]
fn criterion_8_codebook_mixup_ablation() {
    let bench = OverlapBenchmark::default();
    let runs: Vec<_> = (0..5).map(|seed| bench.paired(seed).unwrap()).collect();
    let mean = |f: &dyn Fn(&sketchclip::train::PairedRun) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
    let (with, without) = (mean(&|r| r.with_mixup), mean(&|r| r.without));
    let deltas: Vec<String> = runs.iter().map(|r| format!("{:+.2}", r.delta())).collect();
    verdict(
        8,
        with >= without,
        &format!(
            "held-out continuum top-1 with {with:.2}% vs without {without:.2}%, per-seed deltas [{}]",
            deltas.join(", ")
        ),
    );
}

#[test]
fn criterion_9_cli_reproducibility() {
    let root = tempfile::tempdir().unwrap();
    let data = prepared(root.path());
    let run = |tag: &str| {
        let out = root.path().join(tag);
        let printed = ok(&train_args(&data, &out, &["--epochs", "3"]));
        let loss = printed.lines().find(|l| l.starts_with("final loss")).unwrap().to_string();
        let eval = ok(&[
            "eval",
            "--checkpoint",
            p(&checkpoint_path(&out, 3)),
            "--manifest",
            p(&data.join(MANIFEST_FILE)),
            "--split",
            p(&data.join(SPLIT_FILE)),
            "--which",
            "seen",
            "--out",
            p(&root.path().join(format!("{tag}-eval"))),
        ]);
        (loss, eval.lines().next().unwrap().to_string())
    };
    let (a, b) = (run("a"), run("b"));
    verdict(9, a == b, &format!("run 1 `{}` / `{}`, run 2 `{}` / `{}`", a.0, a.1, b.0, b.1));
}
