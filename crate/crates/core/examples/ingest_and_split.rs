//! Writes a small three-source corpus to disk, ingests it back and draws a
//! seeded few-shot split.
//!
//! cargo run --example ingest_and_split -- [shots] [seed]

use std::collections::BTreeMap;

use sketchclip::sketch::synthetic::{write_corpus, SyntheticConfig};
use sketchclip::sketch::{
    build_split, ingest_edgemap_dir, ingest_stroke_file, Abstraction, IngestOptions, PixelNorm, RasterOptions,
    StrokeFormat, DEFAULT_MAX_POINTS,
};

fn main() -> sketchclip::Result<()> {
    let mut args = std::env::args().skip(1);
    let shots: usize = args.next().map_or(3, |a| a.parse().expect("shots"));
    let seed: u64 = args.next().map_or(0, |a| a.parse().expect("seed"));

    let dir = tempfile::tempdir().expect("temp dir");
    let raster = RasterOptions::new(32, 1.0, PixelNorm::SYMMETRIC);
    let names = ["arrow", "house", "star", "wave"];
    write_corpus(&SyntheticConfig::new(&names, 6, 5, raster), dir.path(), 64)?;
    let categories: Vec<String> = names.iter().map(|s| s.to_string()).collect();

    let mut samples = Vec::new();
    for (file, level) in [("tu.ndjson", Abstraction::Medium), ("qd.ndjson", Abstraction::High)] {
        let opts = IngestOptions {
            format: StrokeFormat::Stroke3Delta,
            abstraction: level,
            raster,
            max_points: DEFAULT_MAX_POINTS,
        };
        let report = ingest_stroke_file(&dir.path().join(file), &categories, &opts)?;
        println!("{file}: {} samples, {} malformed", report.samples.len(), report.errors.len());
        samples.extend(report.samples);
    }
    let edgemaps = ingest_edgemap_dir(&dir.path().join("edgemaps"), &categories, 32, &PixelNorm::SYMMETRIC)?;
    println!("edgemaps: {} images", edgemaps.samples.len());
    samples.extend(edgemaps.samples);

    let mut table: BTreeMap<(String, &str), usize> = BTreeMap::new();
    for s in &samples {
        *table.entry((s.category.clone(), s.abstraction.source_tag())).or_default() += 1;
    }
    for ((category, source), n) in &table {
        println!("  {category:<6} {source}: {n}");
    }

    let seen = categories[..3].to_vec();
    let unseen = categories[3..].to_vec();
    let split = build_split(&samples, &seen, &unseen, shots, seed)?;
    println!(
        "split seed {seed}: train {} ({shots} per category and source), eval seen {}, eval unseen {}",
        split.train_samples.len(),
        split.eval_seen_samples.len(),
        split.eval_unseen_samples.len()
    );
    println!("first training ids: {:?}", &split.train_samples[..4]);
    Ok(())
}
