//! Writes a procedural three-source corpus in the on-disk layouts that
//! `sketchclip prepare-data` reads: `tu.ndjson`, `qd.ndjson` and
//! `edgemaps/<category>/*.png`.
//!
//! cargo run --example synthetic_corpus -- <out_dir> [per_source] [categories]

use std::path::PathBuf;

use sketchclip::sketch::synthetic::{write_corpus, SyntheticConfig};
use sketchclip::sketch::{PixelNorm, RasterOptions};

fn main() -> sketchclip::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "corpus".into()));
    let per_source = args.next().map_or(12, |a| a.parse().expect("per_source"));
    let names = args.next().unwrap_or_else(|| "circle,cross,zigzag,square".into());
    let names: Vec<&str> = names.split(',').collect();

    let cfg = SyntheticConfig::new(&names, per_source, 11, RasterOptions::new(16, 1.0, PixelNorm::SYMMETRIC));
    write_corpus(&cfg, &out, 64)?;
    println!(
        "wrote {} categories x 3 sources x {per_source} sketches to {}",
        names.len(),
        out.display()
    );
    Ok(())
}
