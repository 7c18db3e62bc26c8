//! Trains on overlapping abstraction sources and writes a full evaluation
//! report: per-source and per-category tallies, membership histogram and
//! accuracy against predicted abstraction.
//!
//! cargo run --release --example evaluate_report -- [out_dir] [epochs]

use std::path::PathBuf;

use sketchclip::backbone::toy::toy_backbone;
use sketchclip::sketch::synthetic::{generate, generate_continuum, SyntheticConfig};
use sketchclip::sketch::{PixelNorm, RasterOptions};
use sketchclip::train::{evaluate, train, Model, TrainConfig};

fn main() -> sketchclip::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map_or_else(|| PathBuf::from("eval_report"), PathBuf::from);
    let epochs: usize = args.next().map_or(40, |a| a.parse().expect("epochs"));

    let raster = RasterOptions::new(16, 1.0, PixelNorm::SYMMETRIC);
    let names = ["circle", "square", "triangle"];
    let data = SyntheticConfig::new(&names, 10, 3, raster).overlapping();
    let train_set = generate(&data)?;
    let heldout = generate_continuum(&data, 20)?;
    let categories: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let config = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 30,
        epochs,
        prompt_depth: 2,
        decoder_hidden: 16,
        max_decode_steps: 24,
        checkpoint_every: usize::MAX,
        ..Default::default()
    };
    let model = Model::new(toy_backbone(0)?, config)?;
    train(&model, &train_set.iter().collect::<Vec<_>>(), &categories, None)?;

    let report = evaluate(&model, &heldout.iter().collect::<Vec<_>>(), &categories)?;
    report.write(&out)?;
    println!("held-out top-1 {:.2}% on {} drawings", report.top1, report.samples);
    if let Some(a) = report.abstraction_accuracy {
        println!("abstraction accuracy {a:.2}%");
    }
    println!("own-level membership:");
    for bin in &report.membership_histogram {
        let acc = bin.accuracy.map_or("-".into(), |a| format!("{a:.1}%"));
        println!("  [{:.1}, {:.1})  {:>3}  top-1 {acc}", bin.lower, bin.upper, bin.count);
    }
    println!("accuracy by predicted abstraction score:");
    for bin in &report.accuracy_by_abstraction {
        let acc = bin.accuracy.map_or("-".into(), |a| format!("{a:.1}%"));
        println!("  [{:.1}, {:.1})  {:>3}  top-1 {acc}", bin.lower, bin.upper, bin.count);
    }
    println!("report written to {}", out.display());
    Ok(())
}
