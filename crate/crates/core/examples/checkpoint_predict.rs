//! Trains, saves a checkpoint, restores it and classifies a new drawing,
//! including categories never trained on.
//!
//! cargo run --release --example checkpoint_predict

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sketchclip::backbone::toy::toy_backbone;
use sketchclip::sketch::synthetic::{generate, SyntheticConfig};
use sketchclip::sketch::{PixelNorm, RasterOptions};
use sketchclip::train::{predict, train, Checkpoint, Model, TrainConfig};

fn main() -> sketchclip::Result<()> {
    let raster = RasterOptions::new(16, 1.0, PixelNorm::SYMMETRIC);
    let names = ["circle", "cross", "zigzag"];
    let samples = generate(&SyntheticConfig::new(&names, 5, 9, raster))?;
    let seen: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let config = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 15,
        epochs: 30,
        prompt_depth: 2,
        decoder_hidden: 16,
        max_decode_steps: 24,
        checkpoint_every: usize::MAX,
        ..Default::default()
    };
    let model = Model::new(toy_backbone(0)?, config)?;
    train(&model, &samples.iter().collect::<Vec<_>>(), &seen, None)?;

    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("model.json");
    Checkpoint::capture(&model, &seen, 30, &ChaCha8Rng::seed_from_u64(0))?.save(&path)?;
    let restored = Checkpoint::load(&path)?.restore(None)?;
    println!("checkpoint {} bytes", std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0));

    let fresh = generate(&SyntheticConfig::new(&["zigzag"], 1, 99, raster))?;
    let open_set: Vec<String> = ["circle", "cross", "zigzag", "star", "house"].map(String::from).to_vec();
    for s in &fresh {
        let p = predict(&restored, &s.raster, &open_set, 3, true)?;
        assert_eq!(p, predict(&model, &s.raster, &open_set, 3, true)?);
        println!("{}:", s.id);
        println!("{}", serde_json::to_string_pretty(&p.top)?);
        println!("  abstraction {:.3?}, decoded {} points", p.abstraction.unwrap(), p.decoded.unwrap().len());
    }
    Ok(())
}
