//! Procedural sketch corpora for tests, examples and benchmarks.
//!
//! Each category is a template drawing; a per-sample abstraction score in
//! `[0, 1]` controls how it is drawn. Low scores add contour doubling,
//! hatching and heavy strokes (edgemap-like); high scores simplify, jitter
//! and drop strokes (doodle-like). Each source draws its score from a range:
//! the separable style keeps the three ranges apart, the overlapping style
//! lets the medium range straddle both neighbors.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use super::raster::{rasterize_ink, render_ink, RasterOptions};
use super::sample::{Abstraction, LabeledSample};
use super::vector::{PenState, StrokePoint, VectorSketch};
use crate::error::{Error, Result};

/// Template names, in the order [`generate`] assigns category indices.
pub const TEMPLATES: [&str; 16] = [
    "circle", "cross", "zigzag", "square", "triangle", "house", "star", "spiral", "arrow",
    "wave", "diamond", "ladder", "hourglass", "smile", "grid", "flag",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceStyle {
    Separable,
    Overlapping,
}

impl SourceStyle {
    pub fn score_range(self, source: Abstraction) -> (f64, f64) {
        match (self, source) {
            (SourceStyle::Separable, Abstraction::Low) => (0.0, 0.1),
            (SourceStyle::Separable, Abstraction::Medium) => (0.45, 0.55),
            (SourceStyle::Separable, Abstraction::High) => (0.9, 1.0),
            (SourceStyle::Overlapping, Abstraction::Low) => (0.0, 0.45),
            (SourceStyle::Overlapping, Abstraction::Medium) => (0.2, 0.8),
            (SourceStyle::Overlapping, Abstraction::High) => (0.55, 1.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticConfig {
    pub categories: Vec<String>,
    pub per_source: usize,
    pub seed: u64,
    pub style: SourceStyle,
    pub raster: RasterOptions,
    pub max_points: usize,
}

impl SyntheticConfig {
    pub fn new(categories: &[&str], per_source: usize, seed: u64, raster: RasterOptions) -> Self {
        Self {
            categories: categories.iter().map(|s| s.to_string()).collect(),
            per_source,
            seed,
            style: SourceStyle::Separable,
            raster,
            max_points: super::vector::DEFAULT_MAX_POINTS,
        }
    }

    pub fn overlapping(mut self) -> Self {
        self.style = SourceStyle::Overlapping;
        self
    }
}

/// Stroke width multiplier for edgemap-like drawings: heavier lines at low
/// abstraction scores.
pub fn edgemap_width_factor(score: f64) -> f64 {
    1.0 + 1.5 * (1.0 - score).clamp(0.0, 1.0)
}

/// One drawing of `category` at the given abstraction score, in absolute
/// units (not yet normalized).
pub fn draw(category: &str, score: f64, rng: &mut impl Rng) -> Result<Vec<StrokePoint>> {
    let mut strokes = template(category)
        .ok_or_else(|| Error::InvalidInput(format!("no synthetic template named `{category}`")))?;
    let score = score.clamp(0.0, 1.0);

    if strokes.len() > 1 {
        let keep: Vec<bool> = strokes.iter().map(|_| rng.random::<f64>() >= 0.4 * score).collect();
        if keep.iter().any(|&k| k) {
            let mut it = keep.into_iter();
            strokes.retain(|_| it.next().unwrap());
        }
    }

    let step = 1 + (3.0 * score).round() as usize;
    for s in strokes.iter_mut() {
        if s.len() > 2 {
            let last = *s.last().unwrap();
            let mut thinned: Vec<_> = s.iter().step_by(step).copied().collect();
            if thinned.last() != Some(&last) {
                thinned.push(last);
            }
            *s = thinned;
        }
    }

    let detail = 1.0 - score;
    if rng.random::<f64>() < detail {
        let doubled: Vec<_> = strokes
            .iter()
            .map(|s| s.iter().map(|&(x, y)| (x + 0.025, y + 0.02)).collect::<Vec<_>>())
            .collect();
        strokes.extend(doubled);
    }
    let hatches = (4.0 * detail * rng.random::<f64>()).round() as usize;
    for _ in 0..hatches {
        let y = rng.random_range(0.3..0.7);
        let x = rng.random_range(0.25..0.45);
        strokes.push(vec![(x, y), (x + 0.3, y - 0.15)]);
    }

    let jitter = Normal::new(0.0, 0.004 + 0.03 * score).unwrap();
    let angle = Normal::new(0.0, 0.05 + 0.15 * score).unwrap().sample(rng);
    let (sin, cos) = angle.sin_cos();
    let sx = rng.random_range(0.85..1.15);
    let sy = rng.random_range(0.85..1.15);

    let mut points = Vec::new();
    for s in &strokes {
        for (i, &(x, y)) in s.iter().enumerate() {
            let (x, y) = ((x - 0.5) * sx, (y - 0.5) * sy);
            let (x, y) = (cos * x - sin * y, sin * x + cos * y);
            let pen = if i + 1 == s.len() { PenState::Up } else { PenState::Down };
            points.push(StrokePoint::new(
                (x + jitter.sample(rng)) * 255.0,
                (y + jitter.sample(rng)) * 255.0,
                pen,
            ));
        }
    }
    Ok(points)
}

/// A drawn sample before rasterization.
#[derive(Clone, Debug)]
pub struct Drawing {
    pub id: String,
    pub category: String,
    pub category_index: usize,
    pub abstraction: Abstraction,
    pub score: f64,
    pub vector: VectorSketch,
}

/// Draws `per_source` sketches per category and source, deterministically.
pub fn draw_corpus(cfg: &SyntheticConfig) -> Result<Vec<Drawing>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for (k, category) in cfg.categories.iter().enumerate() {
        for source in Abstraction::ALL {
            let (lo, hi) = cfg.style.score_range(source);
            for i in 0..cfg.per_source {
                let score = rng.random_range(lo..=hi);
                let raw = draw(category, score, &mut rng)?;
                let vector = VectorSketch::from_absolute(raw, cfg.max_points)?;
                out.push(Drawing {
                    id: format!("{}/{category}/{i:03}", source.source_tag().to_lowercase()),
                    category: category.clone(),
                    category_index: k,
                    abstraction: source,
                    score,
                    vector,
                });
            }
        }
    }
    Ok(out)
}

/// Generates labeled samples in memory. Edgemap-like samples are rendered
/// with heavier strokes and carry no vector data.
pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<LabeledSample>> {
    draw_corpus(cfg)?.into_iter().map(|d| render_drawing(d, cfg)).collect()
}

/// Band of the abstraction continuum a score falls in, by thirds.
pub fn score_band(score: f64) -> Abstraction {
    match score {
        s if s < 1.0 / 3.0 => Abstraction::Low,
        s if s < 2.0 / 3.0 => Abstraction::Medium,
        _ => Abstraction::High,
    }
}

/// A source none of the three training sources matches: `per_category`
/// drawings per category with scores uniform over the whole continuum,
/// labeled and rendered by [`score_band`]. Ids start with `xs/`.
pub fn draw_continuum(cfg: &SyntheticConfig, per_category: usize) -> Result<Vec<Drawing>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut out = Vec::new();
    for (k, category) in cfg.categories.iter().enumerate() {
        for i in 0..per_category {
            let score = rng.random_range(0.0..=1.0);
            let raw = draw(category, score, &mut rng)?;
            out.push(Drawing {
                id: format!("xs/{category}/{i:03}"),
                category: category.clone(),
                category_index: k,
                abstraction: score_band(score),
                score,
                vector: VectorSketch::from_absolute(raw, cfg.max_points)?,
            });
        }
    }
    Ok(out)
}

pub fn generate_continuum(cfg: &SyntheticConfig, per_category: usize) -> Result<Vec<LabeledSample>> {
    draw_continuum(cfg, per_category)?
        .into_iter()
        .map(|d| render_drawing(d, cfg))
        .collect()
}

fn render_drawing(d: Drawing, cfg: &SyntheticConfig) -> Result<LabeledSample> {
    let (raster, vector) = if d.abstraction == Abstraction::Low {
        let mut opts = cfg.raster;
        opts.stroke_width *= edgemap_width_factor(d.score);
        (rasterize_ink(&d.vector, &opts)?.to_raster(&opts.norm), None)
    } else {
        (rasterize_ink(&d.vector, &cfg.raster)?.to_raster(&cfg.raster.norm), Some(d.vector))
    };
    LabeledSample::new(d.id, d.category, d.category_index, d.abstraction, raster, vector)
}

/// Writes the corpus in the on-disk layouts the ingest functions read:
/// `tu.ndjson` and `qd.ndjson` as stroke-3 deltas, and
/// `edgemaps/<category>/<name>.png` images rendered at `png_side` pixels.
pub fn write_corpus(cfg: &SyntheticConfig, dir: &Path, png_side: usize) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let drawings = draw_corpus(cfg)?;
    let open = |name: &str| {
        let path = dir.join(name);
        std::fs::File::create(&path)
            .map(std::io::BufWriter::new)
            .map_err(|e| Error::io(path, e))
    };
    let mut tu = open("tu.ndjson")?;
    let mut qd = open("qd.ndjson")?;
    for d in &drawings {
        match d.abstraction {
            Abstraction::Low => {
                let width = (png_side as f64 / cfg.raster.side as f64)
                    * cfg.raster.stroke_width
                    * edgemap_width_factor(d.score);
                let canvas = render_ink(&d.vector, png_side, width)?;
                let bytes: Vec<u8> = canvas
                    .ink()
                    .iter()
                    .map(|&v| ((1.0 - v) * 255.0).round() as u8)
                    .collect();
                let cat_dir = dir.join("edgemaps").join(&d.category);
                std::fs::create_dir_all(&cat_dir).map_err(|e| Error::io(&cat_dir, e))?;
                let name = d.id.rsplit('/').next().unwrap();
                let path = cat_dir.join(format!("{name}.png"));
                image::GrayImage::from_raw(png_side as u32, png_side as u32, bytes)
                    .expect("buffer sized to canvas")
                    .save(&path)
                    .map_err(|e| Error::Image {
                        path: path.clone(),
                        message: e.to_string(),
                    })?;
            }
            source => {
                let (dx, dy, pen) = to_stroke3_columns(&d.vector);
                let record = json!({"id": d.id, "category": d.category, "strokes": [dx, dy, pen]});
                let (out, name) = if source == Abstraction::Medium {
                    (&mut tu, "tu.ndjson")
                } else {
                    (&mut qd, "qd.ndjson")
                };
                writeln!(out, "{record}").map_err(|e| Error::io(dir.join(name), e))?;
            }
        }
    }
    tu.flush().map_err(|e| Error::io(dir.join("tu.ndjson"), e))?;
    qd.flush().map_err(|e| Error::io(dir.join("qd.ndjson"), e))?;
    Ok(())
}

/// Stroke-3 columns on a 0..255 grid. The terminal point is dropped; the
/// reader re-creates it.
pub fn to_stroke3_columns(v: &VectorSketch) -> (Vec<f64>, Vec<f64>, Vec<u8>) {
    let pts = v.points();
    let body = match pts.len() {
        n if n >= 2 && pts[n - 2].pen == PenState::Up => &pts[..n - 1],
        _ => pts,
    };
    let (mut px, mut py) = (0.0, 0.0);
    let mut cols = (Vec::new(), Vec::new(), Vec::new());
    for p in body {
        let (x, y) = ((p.x * 255.0).round(), (p.y * 255.0).round());
        cols.0.push(x - px);
        cols.1.push(y - py);
        cols.2.push(u8::from(p.pen != PenState::Down));
        (px, py) = (x, y);
    }
    cols
}

fn arc(cx: f64, cy: f64, r: f64, from: f64, to: f64, n: usize) -> Vec<(f64, f64)> {
    (0..=n)
        .map(|i| {
            let t = from + (to - from) * i as f64 / n as f64;
            (cx + r * t.cos(), cy + r * t.sin())
        })
        .collect()
}

fn polyline(points: &[(f64, f64)], per_edge: usize) -> Vec<(f64, f64)> {
    let mut out = vec![points[0]];
    for w in points.windows(2) {
        for i in 1..=per_edge {
            let t = i as f64 / per_edge as f64;
            out.push((w[0].0 + t * (w[1].0 - w[0].0), w[0].1 + t * (w[1].1 - w[0].1)));
        }
    }
    out
}

fn template(name: &str) -> Option<Vec<Vec<(f64, f64)>>> {
    let strokes = match name {
        "circle" => vec![arc(0.5, 0.5, 0.4, 0.0, TAU, 24)],
        "cross" => vec![
            polyline(&[(0.5, 0.1), (0.5, 0.9)], 4),
            polyline(&[(0.1, 0.5), (0.9, 0.5)], 4),
        ],
        "zigzag" => vec![polyline(
            &[(0.1, 0.3), (0.3, 0.7), (0.5, 0.3), (0.7, 0.7), (0.9, 0.3)],
            3,
        )],
        "square" => vec![polyline(
            &[(0.15, 0.15), (0.85, 0.15), (0.85, 0.85), (0.15, 0.85), (0.15, 0.15)],
            4,
        )],
        "triangle" => vec![polyline(&[(0.5, 0.1), (0.9, 0.85), (0.1, 0.85), (0.5, 0.1)], 5)],
        "house" => vec![
            polyline(&[(0.2, 0.45), (0.2, 0.9), (0.8, 0.9), (0.8, 0.45)], 3),
            polyline(&[(0.1, 0.5), (0.5, 0.1), (0.9, 0.5)], 3),
        ],
        "star" => {
            let pts: Vec<_> = (0..=5)
                .map(|i| {
                    let t = -PI / 2.0 + i as f64 * 4.0 * PI / 5.0;
                    (0.5 + 0.4 * t.cos(), 0.5 + 0.4 * t.sin())
                })
                .collect();
            vec![polyline(&pts, 2)]
        }
        "spiral" => vec![(0..=40)
            .map(|i| {
                let t = i as f64 / 40.0 * 3.0 * TAU;
                let r = 0.05 + 0.35 * i as f64 / 40.0;
                (0.5 + r * t.cos(), 0.5 + r * t.sin())
            })
            .collect()],
        "arrow" => vec![
            polyline(&[(0.1, 0.5), (0.9, 0.5)], 4),
            polyline(&[(0.65, 0.25), (0.9, 0.5), (0.65, 0.75)], 2),
        ],
        "wave" => vec![(0..=24)
            .map(|i| {
                let t = i as f64 / 24.0;
                (0.1 + 0.8 * t, 0.5 + 0.25 * (t * 2.0 * TAU).sin())
            })
            .collect()],
        "diamond" => vec![polyline(
            &[(0.5, 0.1), (0.9, 0.5), (0.5, 0.9), (0.1, 0.5), (0.5, 0.1)],
            3,
        )],
        "ladder" => vec![
            polyline(&[(0.3, 0.1), (0.3, 0.9)], 4),
            polyline(&[(0.7, 0.1), (0.7, 0.9)], 4),
            polyline(&[(0.3, 0.3), (0.7, 0.3)], 2),
            polyline(&[(0.3, 0.5), (0.7, 0.5)], 2),
            polyline(&[(0.3, 0.7), (0.7, 0.7)], 2),
        ],
        "hourglass" => vec![polyline(
            &[(0.2, 0.1), (0.8, 0.1), (0.2, 0.9), (0.8, 0.9), (0.2, 0.1)],
            3,
        )],
        "smile" => vec![
            arc(0.5, 0.5, 0.4, 0.0, TAU, 20),
            arc(0.5, 0.55, 0.2, 0.2, PI - 0.2, 6),
            polyline(&[(0.38, 0.35), (0.38, 0.42)], 1),
            polyline(&[(0.62, 0.35), (0.62, 0.42)], 1),
        ],
        "grid" => vec![
            polyline(&[(0.1, 0.35), (0.9, 0.35)], 3),
            polyline(&[(0.1, 0.65), (0.9, 0.65)], 3),
            polyline(&[(0.35, 0.1), (0.35, 0.9)], 3),
            polyline(&[(0.65, 0.1), (0.65, 0.9)], 3),
        ],
        "flag" => vec![
            polyline(&[(0.2, 0.9), (0.2, 0.1)], 4),
            polyline(&[(0.2, 0.1), (0.8, 0.25), (0.2, 0.4)], 3),
        ],
        _ => return None,
    };
    Some(strokes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::raster::PixelNorm;

    fn opts() -> RasterOptions {
        RasterOptions::new(16, 1.0, PixelNorm::SYMMETRIC)
    }

    #[test]
    fn every_template_draws_at_all_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for name in TEMPLATES {
            for score in [0.0, 0.5, 1.0] {
                let raw = draw(name, score, &mut rng).unwrap();
                let v = VectorSketch::from_absolute(raw, 196).unwrap();
                assert!(v.pen_down_segments().count() > 0, "{name} at {score}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig::new(&["circle", "cross"], 2, 5, opts());
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.len(), 12);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.raster, y.raster);
        }
    }

    #[test]
    fn stroke3_columns_round_trip_through_reader() {
        let cfg = SyntheticConfig::new(&["house"], 1, 2, opts());
        for d in draw_corpus(&cfg).unwrap() {
            let (dx, dy, pen) = to_stroke3_columns(&d.vector);
            let deltas: Vec<_> = (0..dx.len()).map(|i| (dx[i], dy[i], pen[i] == 1)).collect();
            let back = VectorSketch::from_stroke3(&deltas, 196).unwrap();
            assert_eq!(back.len(), d.vector.len());
            for (p, q) in back.points().iter().zip(d.vector.points()) {
                assert_eq!(p.pen, q.pen);
                assert!((p.x - q.x).abs() < 0.02 && (p.y - q.y).abs() < 0.02);
            }
        }
    }

    #[test]
    fn continuum_spans_all_bands() {
        let cfg = SyntheticConfig::new(&["circle", "star"], 4, 9, opts());
        let samples = generate_continuum(&cfg, 30).unwrap();
        assert_eq!(samples.len(), 60);
        for a in Abstraction::ALL {
            assert!(samples.iter().any(|s| s.abstraction == a));
        }
        assert!(samples.iter().all(|s| s.id.starts_with("xs/")));
        let train_ids: Vec<_> = generate(&cfg).unwrap().into_iter().map(|s| s.id).collect();
        assert!(samples.iter().all(|s| !train_ids.contains(&s.id)));
    }

    #[test]
    fn low_abstraction_carries_more_ink() {
        let cfg = SyntheticConfig::new(&["square"], 8, 3, opts());
        let samples = generate(&cfg).unwrap();
        let ink = |a: Abstraction| {
            samples
                .iter()
                .filter(|s| s.abstraction == a)
                .map(|s| s.raster.pixels().iter().map(|&p| (1.0 - p) as f64).sum::<f64>())
                .sum::<f64>()
        };
        assert!(ink(Abstraction::Low) > ink(Abstraction::Medium));
        assert!(ink(Abstraction::Medium) > ink(Abstraction::High));
    }
}
