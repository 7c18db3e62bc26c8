//! Few-shot training on a synthetic three-source corpus with the toy
//! backbone, then evaluation on the training set.
//!
//! cargo run --release --example train_toy -- [epochs] [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use sketchclip::backbone::load_pretrained;
use sketchclip::sketch::synthetic::{generate, SyntheticConfig};
use sketchclip::sketch::{PixelNorm, RasterOptions};
use sketchclip::train::{evaluate, train, Model, TrainConfig};

fn main() -> sketchclip::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(200, |a| a.parse().expect("epochs"));
    let out_dir = args.next().map(PathBuf::from);

    let raster = RasterOptions::new(16, 1.0, PixelNorm::SYMMETRIC);
    let names = ["circle", "cross", "zigzag"];
    let samples = generate(&SyntheticConfig::new(&names, 10, 7, raster))?;
    let seen: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let refs: Vec<_> = samples.iter().collect();

    let config = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 30,
        epochs,
        prompt_depth: 2,
        decoder_hidden: 16,
        max_decode_steps: 48,
        checkpoint_every: epochs,
        ..Default::default()
    };
    let model = Model::new(load_pretrained("toy", None)?, config)?;
    let start = Instant::now();
    let outcome = train(&model, &refs, &seen, out_dir.as_deref())?;
    for e in outcome.log.iter().filter(|e| e.epoch % 10 == 0 || e.epoch == 1) {
        println!(
            "epoch {:>3}  loss {:.4}  ce {:.4}  s2v {:.4}  cb {:.4}  mix {:.4}  acc {:>6.2}%  abs {:>6.2}%",
            e.epoch,
            e.loss,
            e.ce,
            e.sketch2vec,
            e.codebook,
            e.mixup,
            e.train_accuracy,
            e.abstraction_accuracy.unwrap_or(0.0)
        );
    }
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());

    let report = evaluate(&model, &refs, &seen)?;
    println!("train top-1 {:.2}%", report.top1);
    for (source, t) in &report.per_source {
        println!("  {source}: {:.2}% of {}", t.accuracy, t.count);
    }
    Ok(())
}
