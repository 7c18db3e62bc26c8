//! Keeps the edgemaps a zero-shot scorer finds most recognizable, per
//! category.
//!
//! cargo run --example edgemap_filter -- [keep_fraction]

use sketchclip::backbone::toy::toy_backbone;
use sketchclip::nn::to_f64_vec;
use sketchclip::sketch::synthetic::{generate, SyntheticConfig};
use sketchclip::sketch::{filter_edgemaps, Abstraction, PixelNorm, RasterOptions, RasterSketch};

fn main() -> sketchclip::Result<()> {
    let keep: f64 = std::env::args().nth(1).map_or(0.5, |a| a.parse().expect("fraction"));
    let backbone = toy_backbone(0)?;
    let names = ["circle", "cross", "zigzag"];
    let raster = RasterOptions::new(16, 1.0, PixelNorm::SYMMETRIC);
    let edgemaps: Vec<_> = generate(&SyntheticConfig::new(&names, 8, 2, raster))?
        .into_iter()
        .filter(|s| s.abstraction == Abstraction::Low)
        .collect();
    let categories: Vec<String> = names.iter().map(|s| s.to_string()).collect();

    let scorer = |r: &RasterSketch, n: &[String]| {
        let f = backbone.encode_images(&backbone.image_batch(&[r])?, None)?;
        let t = backbone.encode_text(&backbone.tokenize(n, 0)?, None)?;
        to_f64_vec(&backbone.similarity.probabilities(&f, &t)?)
    };
    for s in &edgemaps {
        let p = scorer(&s.raster, &categories)?;
        println!("{:<22} own-class probability {:.4}", s.id, p[s.category_index]);
    }
    let outcome = filter_edgemaps(edgemaps, &categories, &scorer, keep)?;
    println!("kept {} at fraction {keep}:", outcome.kept.len());
    for s in &outcome.kept {
        println!("  {}", s.id);
    }
    Ok(())
}
