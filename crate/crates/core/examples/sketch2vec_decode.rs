//! Trains briefly, then lets the GRU decoder redraw a sketch from its raster
//! feature, side by side with the ground truth.
//!
//! cargo run --release --example sketch2vec_decode -- [epochs]

use sketchclip::backbone::toy::toy_backbone;
use sketchclip::sketch::synthetic::{generate, SyntheticConfig};
use sketchclip::sketch::{render_ink, Abstraction, PixelNorm, RasterOptions, VectorSketch};
use sketchclip::train::{predict, train, Model, TrainConfig};

fn ascii(v: &VectorSketch) -> sketchclip::Result<Vec<String>> {
    let canvas = render_ink(v, 32, 1.0)?;
    Ok((0..32)
        .map(|r| (0..32).map(|c| if canvas.at(r, c) > 0.3 { '#' } else { '.' }).collect())
        .collect())
}

fn main() -> sketchclip::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(60, |a| a.parse().expect("epochs"));
    let raster = RasterOptions::new(16, 1.0, PixelNorm::SYMMETRIC);
    let names = ["circle", "square", "zigzag"];
    let samples = generate(&SyntheticConfig::new(&names, 6, 1, raster))?;
    let refs: Vec<_> = samples.iter().collect();
    let categories: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let config = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 18,
        epochs,
        prompt_depth: 2,
        decoder_hidden: 32,
        max_decode_steps: 32,
        checkpoint_every: usize::MAX,
        ..Default::default()
    };
    let model = Model::new(toy_backbone(0)?, config)?;
    let outcome = train(&model, &refs, &categories, None)?;
    let last = outcome.log.last().unwrap();
    println!("epoch {}  sketch2vec loss {:.4}", last.epoch, last.sketch2vec);

    let sample = samples.iter().find(|s| s.abstraction == Abstraction::High).unwrap();
    let decoded = predict(&model, &sample.raster, &categories, 1, true)?.decoded.unwrap();
    println!("{} decoded into {} points", sample.id, decoded.len());
    // force a terminal row so a truncated decode still renders
    let mut rows = decoded;
    rows.last_mut().unwrap()[2..].copy_from_slice(&[0.0, 0.0, 1.0]);
    let redrawn = VectorSketch::from_stroke5_rows(&rows, rows.len().max(2))?;
    for (truth, drawn) in ascii(sample.vector.as_ref().unwrap())?.iter().zip(ascii(&redrawn)?) {
        println!("{truth}   {drawn}");
    }
    Ok(())
}
