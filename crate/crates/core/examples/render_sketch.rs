//! Parses a stroke-3 record, normalizes it and renders it as a raster.
//!
//! cargo run --example render_sketch -- [file.ndjson] [record]

use sketchclip::sketch::ingest::parse_record;
use sketchclip::sketch::{render_ink, StrokeFormat, DEFAULT_MAX_POINTS};

const HOUSE: &str = r#"{"category": "house", "strokes": [
    [0, 40, 0, -40, 20, 20, -20, 10, 0, 0],
    [0, 0, 40, 0, -20, -20, 0, 20, 20, -20],
    [0, 0, 0, 0, 0, 0, 1, 0, 0, 1]]}"#;

fn main() -> sketchclip::Result<()> {
    let mut args = std::env::args().skip(1);
    let text = match args.next() {
        Some(path) => std::fs::read_to_string(&path).map_err(|source| sketchclip::Error::Io {
            path: path.into(),
            source,
        })?,
        None => HOUSE.replace('\n', ""),
    };
    let index: usize = args.next().map_or(0, |a| a.parse().expect("record index"));
    let line = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .nth(index)
        .expect("record exists");
    let record = parse_record(line, StrokeFormat::Stroke3Delta, DEFAULT_MAX_POINTS, index)?;
    let v = &record.vector;
    println!("{}: {} points in {} strokes", record.category, v.len(), v.stroke_count());
    for row in v.to_stroke5_rows().iter().take(6) {
        println!("  {row:?}");
    }

    let canvas = render_ink(v, 32, 1.0)?;
    for r in 0..32 {
        let line: String = (0..32)
            .map(|c| match canvas.at(r, c) {
                x if x > 0.5 => '#',
                x if x > 0.1 => '+',
                _ => '.',
            })
            .collect();
        println!("{line}");
    }
    println!("total ink {:.1} pixels", canvas.total_ink());
    Ok(())
}
