//! Raster rendering of vector sketches.
//!
//! Rendering is split in two: an [`InkCanvas`] holds anti-aliased stroke
//! coverage in `[0, 1]`, and a [`RasterSketch`] holds the 3-channel image a
//! backbone consumes (white background, black ink, per-channel normalized).

use serde::{Deserialize, Serialize};

use super::vector::VectorSketch;
use crate::error::{Error, Result};

/// Smallest canvas [`render_ink`] accepts.
pub const MIN_RENDER_SIDE: usize = 32;

/// Per-channel `(value - mean) / std` normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelNorm {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl PixelNorm {
    /// CLIP image statistics.
    pub const CLIP: PixelNorm = PixelNorm {
        mean: [0.481_454_66, 0.457_827_5, 0.408_210_73],
        std: [0.268_629_54, 0.261_302_58, 0.275_777_1],
    };

    /// Maps `[0, 1]` to `[-1, 1]`.
    pub const SYMMETRIC: PixelNorm = PixelNorm {
        mean: [0.5; 3],
        std: [0.5; 3],
    };

    pub fn apply(&self, channel: usize, value: f32) -> f32 {
        (value - self.mean[channel]) / self.std[channel]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterOptions {
    /// Output side, equal to the backbone input resolution.
    pub side: usize,
    /// Stroke width in output pixels.
    pub stroke_width: f64,
    pub norm: PixelNorm,
}

impl RasterOptions {
    pub fn new(side: usize, stroke_width: f64, norm: PixelNorm) -> Self {
        Self {
            side,
            stroke_width,
            norm,
        }
    }

    /// Supersampling factor used when `side` is below [`MIN_RENDER_SIDE`].
    pub fn supersample(&self) -> usize {
        MIN_RENDER_SIDE.div_ceil(self.side).max(1)
    }
}

/// Anti-aliased ink coverage, row-major, `side * side` values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct InkCanvas {
    side: usize,
    ink: Vec<f32>,
}

impl InkCanvas {
    pub fn blank(side: usize) -> Self {
        Self {
            side,
            ink: vec![0.0; side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn ink(&self) -> &[f32] {
        &self.ink
    }

    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.ink[row * self.side + col]
    }

    /// Number of pixels with coverage at least `threshold`.
    pub fn ink_pixels(&self, threshold: f32) -> usize {
        self.ink.iter().filter(|&&v| v >= threshold).count()
    }

    pub fn total_ink(&self) -> f64 {
        self.ink.iter().map(|&v| v as f64).sum()
    }

    /// Draws a segment given in pixel coordinates.
    pub fn draw_segment(&mut self, a: (f64, f64), b: (f64, f64), width: f64) {
        let half = width / 2.0;
        let reach = half + 1.0;
        let side = self.side as f64;
        let x_lo = (a.0.min(b.0) - reach).floor().max(0.0) as usize;
        let x_hi = (a.0.max(b.0) + reach).ceil().min(side) as usize;
        let y_lo = (a.1.min(b.1) - reach).floor().max(0.0) as usize;
        let y_hi = (a.1.max(b.1) + reach).ceil().min(side) as usize;
        for row in y_lo..y_hi {
            for col in x_lo..x_hi {
                let center = (col as f64 + 0.5, row as f64 + 0.5);
                let d = point_segment_distance(center, a, b);
                let coverage = (half + 0.5 - d).clamp(0.0, 1.0) as f32;
                let cell = &mut self.ink[row * self.side + col];
                if coverage > *cell {
                    *cell = coverage;
                }
            }
        }
    }

    /// Box-filter downsampling by an integer factor.
    pub fn downsample(&self, factor: usize) -> Result<InkCanvas> {
        if factor == 0 || self.side % factor != 0 {
            return Err(Error::Config(format!(
                "cannot downsample side {} by factor {factor}",
                self.side
            )));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let side = self.side / factor;
        let norm = (factor * factor) as f32;
        let mut ink = vec![0.0; side * side];
        for row in 0..side {
            for col in 0..side {
                let mut acc = 0.0;
                for dy in 0..factor {
                    for dx in 0..factor {
                        acc += self.at(row * factor + dy, col * factor + dx);
                    }
                }
                ink[row * side + col] = acc / norm;
            }
        }
        Ok(InkCanvas { side, ink })
    }

    /// Black ink on a white background, normalized per channel.
    pub fn to_raster(&self, norm: &PixelNorm) -> RasterSketch {
        let plane = self.side * self.side;
        let mut pixels = Vec::with_capacity(3 * plane);
        for c in 0..3 {
            pixels.extend(self.ink.iter().map(|&v| norm.apply(c, 1.0 - v)));
        }
        RasterSketch {
            side: self.side,
            pixels,
        }
    }
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Renders pen-down segments onto a `side x side` canvas. Pen-up moves and
/// the terminal point draw nothing.
pub fn render_ink(v: &VectorSketch, side: usize, stroke_width: f64) -> Result<InkCanvas> {
    if side < MIN_RENDER_SIDE {
        return Err(Error::Config(format!(
            "render side must be >= {MIN_RENDER_SIDE}, got {side}"
        )));
    }
    let mut canvas = InkCanvas::blank(side);
    let s = side as f64;
    for (a, b) in v.pen_down_segments() {
        canvas.draw_segment((a.0 * s, a.1 * s), (b.0 * s, b.1 * s), stroke_width);
    }
    Ok(canvas)
}

/// Renders at `side` pixels with the given stroke width and normalization.
pub fn render_raster(
    v: &VectorSketch,
    side: usize,
    stroke_width: f64,
    norm: &PixelNorm,
) -> Result<RasterSketch> {
    Ok(render_ink(v, side, stroke_width)?.to_raster(norm))
}

/// Renders for a backbone whose resolution may be below the minimum canvas:
/// draws on a supersampled canvas and box-filters down to `opts.side`.
pub fn rasterize(v: &VectorSketch, opts: &RasterOptions) -> Result<RasterSketch> {
    Ok(rasterize_ink(v, opts)?.to_raster(&opts.norm))
}

pub fn rasterize_ink(v: &VectorSketch, opts: &RasterOptions) -> Result<InkCanvas> {
    let factor = opts.supersample();
    render_ink(v, opts.side * factor, opts.stroke_width * factor as f64)?.downsample(factor)
}

/// A normalized 3-channel square image in channel-major layout.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterSketch {
    side: usize,
    pixels: Vec<f32>,
}

impl RasterSketch {
    pub fn from_pixels(side: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != 3 * side * side {
            return Err(Error::shape("raster pixels", 3 * side * side, pixels.len()));
        }
        Ok(Self { side, pixels })
    }

    /// Builds from interleaved RGB intensities in `[0, 1]`.
    pub fn from_rgb(side: usize, rgb: &[f32], norm: &PixelNorm) -> Result<Self> {
        if rgb.len() != 3 * side * side {
            return Err(Error::shape("rgb buffer", 3 * side * side, rgb.len()));
        }
        let plane = side * side;
        let mut pixels = vec![0.0; 3 * plane];
        for (i, px) in rgb.chunks_exact(3).enumerate() {
            for c in 0..3 {
                pixels[c * plane + i] = norm.apply(c, px[c]);
            }
        }
        Ok(Self { side, pixels })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }
}
