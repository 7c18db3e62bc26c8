//! Raster-to-vector auxiliary head: a GRU that regresses stroke-5 points
//! from the sketch feature.

use candle_core::{DType, Device, Tensor, Var, D};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{linear, log_softmax_last, sigmoid, Init};
use crate::sketch::VectorSketch;

pub const DEFAULT_HIDDEN: usize = 256;
pub const START_TOKEN: [f64; 5] = [0.0, 0.0, 1.0, 0.0, 0.0];

/// Gate order in the stacked weights is reset, update, candidate.
#[derive(Clone, Debug)]
pub struct Sketch2VecDecoder {
    pub w_h: Var,
    pub b_h: Var,
    pub w_ih: Var,
    pub b_ih: Var,
    pub w_hh: Var,
    pub b_hh: Var,
    pub w_p: Var,
    pub b_p: Var,
}

impl Sketch2VecDecoder {
    pub fn init<R: Rng>(init: &mut Init<'_, R>, feature_dim: usize, hidden: usize) -> Result<Self> {
        let k = (hidden as f64).powf(-0.5);
        let input = feature_dim + 5;
        Ok(Self {
            w_h: init.var(&[hidden, feature_dim], (feature_dim as f64).powf(-0.5))?,
            b_h: init.zeros_var(&[hidden])?,
            w_ih: init.var(&[3 * hidden, input], (input as f64).powf(-0.5))?,
            b_ih: init.zeros_var(&[3 * hidden])?,
            w_hh: init.var(&[3 * hidden, hidden], k)?,
            b_hh: init.zeros_var(&[3 * hidden])?,
            w_p: init.var(&[5, hidden], k)?,
            b_p: init.zeros_var(&[5])?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.w_h.dims()[0]
    }

    pub fn feature_dim(&self) -> usize {
        self.w_h.dims()[1]
    }

    pub fn vars(&self) -> Vec<(String, Var)> {
        [
            ("w_h", &self.w_h),
            ("b_h", &self.b_h),
            ("w_ih", &self.w_ih),
            ("b_ih", &self.b_ih),
            ("w_hh", &self.w_hh),
            ("b_hh", &self.b_hh),
            ("w_p", &self.w_p),
            ("b_p", &self.b_p),
        ]
        .into_iter()
        .map(|(n, v)| (format!("decoder.{n}"), v.clone()))
        .collect()
    }

    /// One GRU step on `x (B, d + 5)` and `h (B, H)`.
    pub fn cell(&self, x: &Tensor, h: &Tensor) -> Result<Tensor> {
        let hd = self.hidden();
        let gi = linear(x, self.w_ih.as_tensor(), Some(self.b_ih.as_tensor()))?;
        let gh = linear(h, self.w_hh.as_tensor(), Some(self.b_hh.as_tensor()))?;
        let r = sigmoid(&(gi.narrow(1, 0, hd)? + gh.narrow(1, 0, hd)?)?)?;
        let z = sigmoid(&(gi.narrow(1, hd, hd)? + gh.narrow(1, hd, hd)?)?)?;
        let n = (gi.narrow(1, 2 * hd, hd)? + (r * gh.narrow(1, 2 * hd, hd)?)?)?.tanh()?;
        let keep = (z.ones_like()? - &z)?;
        Ok(((keep * n)? + (z * h)?)?)
    }

    /// Decodes `steps` points from features `(B, d)`. With `teacher`
    /// `(B, >= steps, 5)`, step `t` consumes ground-truth point `t - 1`;
    /// otherwise it consumes its own previous output with the pen logits
    /// collapsed to one-hot. Returns `(B, steps, 5)`.
    pub fn decode(&self, features: &Tensor, steps: usize, teacher: Option<&Tensor>) -> Result<Tensor> {
        if steps == 0 {
            return Err(Error::InvalidInput("decode length must be at least 1".into()));
        }
        let (b, d) = features.dims2()?;
        if d != self.feature_dim() {
            return Err(Error::shape("decoder feature", self.feature_dim(), d));
        }
        if let Some(t) = teacher {
            let (tb, tl, tc) = t.dims3()?;
            if tb != b || tl < steps || tc != 5 {
                return Err(Error::shape("teacher points", (b, steps, 5), t.dims()));
            }
        }
        let mut h = linear(features, self.w_h.as_tensor(), Some(self.b_h.as_tensor()))?;
        let start = Tensor::new(&START_TOKEN, features.device())?
            .to_dtype(features.dtype())?
            .unsqueeze(0)?
            .broadcast_as((b, 5))?
            .contiguous()?;
        let mut prev = start;
        let mut outputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let x = Tensor::cat(&[features, &prev], 1)?;
            h = self.cell(&x, &h)?;
            let p = linear(&h, self.w_p.as_tensor(), Some(self.b_p.as_tensor()))?;
            prev = match teacher {
                Some(tp) => tp.narrow(1, t, 1)?.squeeze(1)?,
                None => collapse_pen(&p.detach())?,
            };
            outputs.push(p);
        }
        Ok(Tensor::stack(&outputs, 1)?)
    }
}

fn collapse_pen(p: &Tensor) -> Result<Tensor> {
    let coords = p.narrow(1, 0, 2)?;
    let pen = p.narrow(1, 2, 3)?;
    let idx = pen.argmax_keepdim(1)?;
    let classes = Tensor::arange(0u32, 3, p.device())?.unsqueeze(0)?;
    let one_hot = idx.broadcast_eq(&classes)?.to_dtype(p.dtype())?;
    Ok(Tensor::cat(&[&coords, &one_hot], 1)?)
}

/// Stroke-5 targets padded to a fixed decode length.
#[derive(Clone, Debug)]
pub struct PaddedTargets {
    /// `(B, T, 5)`.
    pub points: Tensor,
    /// `(B, T)`: `1 / N_pts` on real points, 0 on padding and on samples
    /// without vector data.
    pub weights: Tensor,
    /// Samples that carry vector data.
    pub active: usize,
}

impl PaddedTargets {
    /// Truncates or pads every sketch to `steps` points. `None` entries are
    /// fully masked.
    pub fn new(sketches: &[Option<&VectorSketch>], steps: usize, device: &Device, dtype: DType) -> Result<Self> {
        let b = sketches.len();
        let mut points = vec![0.0f64; b * steps * 5];
        let mut weights = vec![0.0f64; b * steps];
        let mut active = 0;
        for (i, s) in sketches.iter().enumerate() {
            let Some(s) = s else { continue };
            let rows = s.to_stroke5_rows();
            let n = rows.len().min(steps);
            if n == 0 {
                continue;
            }
            active += 1;
            for (t, row) in rows.iter().take(n).enumerate() {
                points[(i * steps + t) * 5..][..5].copy_from_slice(row);
                weights[i * steps + t] = 1.0 / n as f64;
            }
        }
        Ok(Self {
            points: Tensor::from_vec(points, (b, steps, 5), device)?.to_dtype(dtype)?,
            weights: Tensor::from_vec(weights, (b, steps), device)?.to_dtype(dtype)?,
            active,
        })
    }

    pub fn steps(&self) -> usize {
        self.points.dims()[1]
    }
}

/// Per sample `(1/N) sum_t [(x - x̂)^2 + (y - ŷ)^2] + (1/N) sum_t CE`, averaged
/// over samples that carry vector data. Zero when none do.
pub fn sketch2vec_loss(pred: &Tensor, target: &PaddedTargets) -> Result<Tensor> {
    if pred.dims() != target.points.dims() {
        return Err(Error::shape("decoded sequence", target.points.dims(), pred.dims()));
    }
    if target.active == 0 {
        return Ok(Tensor::zeros((), pred.dtype(), pred.device())?);
    }
    let coord_err = (pred.narrow(2, 0, 2)? - target.points.narrow(2, 0, 2)?)?
        .sqr()?
        .sum(D::Minus1)?;
    let pen_ce = (target.points.narrow(2, 2, 3)? * log_softmax_last(&pred.narrow(2, 2, 3)?)?)?
        .sum(D::Minus1)?
        .neg()?;
    let per_point = (coord_err + pen_ce)?;
    let total = (per_point * &target.weights)?.sum_all()?;
    Ok((total / target.active as f64)?)
}
