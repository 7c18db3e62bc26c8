//! How one sketch conditions the text prompts: Meta-Net context plus the
//! codebook mixture, added to every prompted text layer.
//!
//! cargo run --example prompt_composition

use sketchclip::backbone::toy::toy_backbone;
use sketchclip::nn::to_f64_vec;
use sketchclip::sketch::synthetic::{generate, SyntheticConfig};
use sketchclip::sketch::{PixelNorm, RasterOptions};
use sketchclip::train::{Model, TrainConfig};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn main() -> sketchclip::Result<()> {
    let config = TrainConfig {
        prompt_depth: 2,
        context_tokens: 4,
        ..Default::default()
    };
    let model = Model::new(toy_backbone(0)?, config)?;
    let shape = model.prompts.shape;
    println!(
        "depth {}  tokens {}  vision width {}  text width {}  feature dim {}  meta hidden {}",
        shape.depth, shape.prompt_len, shape.vision_width, shape.text_width, shape.feature_dim, shape.meta_hidden
    );

    let raster = RasterOptions::new(16, 1.0, PixelNorm::SYMMETRIC);
    let samples = generate(&SyntheticConfig::new(&["star"], 1, 3, raster))?;
    let refs: Vec<_> = samples.iter().collect();
    let f = model.image_features(&model.image_batch(&refs)?)?;
    let pi = model.prompts.meta_context(&f)?;
    let dist = model.abstraction(&f)?.expect("codebook enabled");
    let eta = model.codebook.as_ref().unwrap().abstraction_prompt(&dist)?;
    let prompts = model.text_prompts(&f, Some(&dist))?;
    println!("shared text prompts {:?}", model.prompts.text.dims());
    println!("per-sketch prompts  {:?}", prompts.dims());

    let dist = to_f64_vec(&dist)?;
    let pi = to_f64_vec(&pi)?;
    let eta = to_f64_vec(&eta)?;
    let size = shape.prompt_len * shape.text_width;
    for (i, s) in samples.iter().enumerate() {
        println!(
            "{:<16} abstraction {:.3?}  |pi| {:.4}  |eta| {:.4}",
            s.id,
            &dist[i * 3..i * 3 + 3],
            norm(&pi[i * size..(i + 1) * size]),
            norm(&eta[i * size..(i + 1) * size])
        );
    }
    Ok(())
}
