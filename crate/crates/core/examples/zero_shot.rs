//! Zero-shot classification with the frozen backbone: cosine similarity
//! between an image feature and one text feature per category name.
//!
//! cargo run --example zero_shot -- [category,category,...]

use sketchclip::backbone::toy::toy_backbone;
use sketchclip::nn::to_f64_vec;
use sketchclip::sketch::synthetic::{generate, SyntheticConfig};
use sketchclip::sketch::RasterOptions;

fn main() -> sketchclip::Result<()> {
    let list = std::env::args().nth(1).unwrap_or_else(|| "circle,cross,zigzag,star".into());
    let names: Vec<&str> = list.split(',').collect();
    let categories: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let backbone = toy_backbone(0)?;
    let raster = RasterOptions::new(backbone.image_size(), 1.0, backbone.pixel_norm);
    let samples = generate(&SyntheticConfig::new(&names, 1, 4, raster))?;

    let refs: Vec<_> = samples.iter().map(|s| &s.raster).collect();
    let image = backbone.encode_images(&backbone.image_batch(&refs)?, None)?;
    let text = backbone.encode_text(&backbone.tokenize(&categories, 0)?, None)?;
    let probs = to_f64_vec(&backbone.similarity.probabilities(&image, &text)?)?;
    println!("temperature {}", backbone.similarity.temperature);
    let mut correct = 0;
    for (s, row) in samples.iter().zip(probs.chunks(categories.len())) {
        let best = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        correct += usize::from(best == s.category_index);
        println!("{:<18} -> {:<8} p={:.3}", s.id, categories[best], row[best]);
    }
    // the toy backbone is random, so this sits near chance
    println!("zero-shot top-1 {correct}/{}", samples.len());
    Ok(())
}
