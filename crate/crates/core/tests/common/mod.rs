//! Shared fixtures and a plain-`f64` reference implementation of the toy
//! backbone, written loop by loop without tensor ops.

#![allow(dead_code)]

pub mod cli;

use candle_core::{Tensor, Var};
use sketchclip::backbone::transformer::{LayerNormParams, Linear, TransformerLayer};
use sketchclip::backbone::{Backbone, TextEncoder, VisionEncoder};
use sketchclip::nn::to_f64_vec;
use sketchclip::sketch::synthetic::{generate, SyntheticConfig};
use sketchclip::sketch::{LabeledSample, PixelNorm, RasterOptions};
use sketchclip::train::TrainConfig;

pub type Mat = Vec<Vec<f64>>;

pub fn toy_raster() -> RasterOptions {
    RasterOptions::new(16, 1.0, PixelNorm::SYMMETRIC)
}

pub fn toy_corpus(names: &[&str], per_source: usize, seed: u64) -> Vec<LabeledSample> {
    generate(&SyntheticConfig::new(names, per_source, seed, toy_raster())).unwrap()
}

/// Small, fast configuration for the toy backbone.
pub fn toy_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        batch_size: 30,
        epochs: 3,
        prompt_depth: 2,
        decoder_hidden: 8,
        max_decode_steps: 12,
        ..Default::default()
    }
}

pub fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

pub fn vals(t: &Tensor) -> Vec<f64> {
    to_f64_vec(t).unwrap()
}

pub fn matrix(t: &Tensor) -> Mat {
    let dims = t.dims().to_vec();
    let cols = *dims.last().unwrap();
    vals(t).chunks(cols).map(|c| c.to_vec()).collect()
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what}: length");
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "{what}[{i}]: {x} vs {y} (|diff| {})", (x - y).abs());
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---- reference math ----

pub fn matvec(w: &Mat, x: &[f64]) -> Vec<f64> {
    w.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn dense(l: &Linear, x: &[f64]) -> Vec<f64> {
    let y = matvec(&matrix(&l.weight), x);
    match &l.bias {
        Some(b) => add(&y, &vals(b)),
        None => y,
    }
}

pub fn layer_norm(ln: &LayerNormParams, x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let w = vals(ln.weight.as_tensor());
    let b = vals(ln.bias.as_tensor());
    (0..x.len()).map(|i| (x[i] - mean) / (var + ln.eps).sqrt() * w[i] + b[i]).collect()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn quick_gelu(x: f64) -> f64 {
    x * sigmoid(1.702 * x)
}

/// One pre-norm block over a token list; `causal` hides later tokens.
pub fn block(layer: &TransformerLayer, x: &[Vec<f64>], causal: bool) -> Vec<Vec<f64>> {
    let width = x[0].len();
    let hd = width / layer.heads;
    let normed: Vec<_> = x.iter().map(|t| layer_norm(&layer.ln_1, t)).collect();
    let q: Vec<_> = normed.iter().map(|t| scale(&dense(&layer.q_proj, t), (hd as f64).powf(-0.5))).collect();
    let k: Vec<_> = normed.iter().map(|t| dense(&layer.k_proj, t)).collect();
    let v: Vec<_> = normed.iter().map(|t| dense(&layer.v_proj, t)).collect();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut attended = vec![0.0; width];
        for h in 0..layer.heads {
            let r = h * hd..(h + 1) * hd;
            let visible = if causal { i + 1 } else { x.len() };
            let scores: Vec<f64> = (0..visible)
                .map(|j| q[i][r.clone()].iter().zip(&k[j][r.clone()]).map(|(a, b)| a * b).sum())
                .collect();
            let p = softmax(&scores);
            for (j, pj) in p.iter().enumerate() {
                for c in r.clone() {
                    attended[c] += pj * v[j][c];
                }
            }
        }
        let h1 = add(&x[i], &dense(&layer.out_proj, &attended));
        let m: Vec<f64> = dense(&layer.fc1, &layer_norm(&layer.ln_2, &h1)).into_iter().map(quick_gelu).collect();
        out.push(add(&h1, &dense(&layer.fc2, &m)));
    }
    out
}

/// Reference image encoder. `pixels` is channel-major `(3, H, W)`;
/// `prompts[j]` holds the `n` prompt tokens of layer `j`.
pub fn encode_image(enc: &VisionEncoder, pixels: &[f64], prompts: &[Mat]) -> Vec<f64> {
    let cfg = &enc.config;
    let (side, p, g) = (cfg.image_size, cfg.patch_size, cfg.grid());
    let pe = matrix(&enc.patch_embedding);
    let pos = matrix(&enc.position_embedding);
    let mut tokens = vec![add(&vals(&enc.class_embedding), &pos[0])];
    for gy in 0..g {
        for gx in 0..g {
            let mut patch = Vec::with_capacity(3 * p * p);
            for c in 0..3 {
                for py in 0..p {
                    for px in 0..p {
                        patch.push(pixels[c * side * side + (gy * p + py) * side + gx * p + px]);
                    }
                }
            }
            tokens.push(add(&matvec(&pe, &patch), &pos[1 + gy * g + gx]));
        }
    }
    let mut x: Vec<_> = tokens.iter().map(|t| layer_norm(&enc.pre_ln, t)).collect();
    let base = 1 + g * g;
    for (i, layer) in enc.layers.iter().enumerate() {
        if i < prompts.len() {
            x.truncate(base);
            x.extend(prompts[i].iter().cloned());
        }
        x = block(layer, &x, false);
    }
    matvec(&matrix(&enc.projection), &layer_norm(&enc.post_ln, &x[0]))
}

/// Reference text encoder for one category name with per-layer prompts.
pub fn encode_text(enc: &TextEncoder, name: &str, prompts: &[Mat]) -> Vec<f64> {
    let emb = matrix(&enc.token_embedding);
    let pos = matrix(&enc.position_embedding);
    let n = prompts.first().map_or(0, |p| p.len());
    let mut x = vec![emb[enc.tokenizer.start_token() as usize].clone()];
    for slot in 0..n {
        x.push(prompts[0][slot].clone());
    }
    for id in enc.tokenizer.encode(name) {
        x.push(emb[id as usize].clone());
    }
    x.push(emb[enc.tokenizer.end_token() as usize].clone());
    let end = x.len() - 1;
    for (i, t) in x.iter_mut().enumerate() {
        *t = add(t, &pos[i]);
    }
    for (i, layer) in enc.layers.iter().enumerate() {
        if i > 0 && i < prompts.len() {
            for slot in 0..n {
                x[1 + slot] = prompts[i][slot].clone();
            }
        }
        x = block(layer, &x, true);
    }
    matvec(&matrix(&enc.projection), &layer_norm(&enc.final_ln, &x[end]))
}

/// Eq. 1 evaluated term by term.
pub fn class_probabilities(f: &[f64], text: &[Vec<f64>], tau: f64) -> Vec<f64> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos: Vec<f64> = text
        .iter()
        .map(|t| f.iter().zip(t).map(|(a, b)| a * b).sum::<f64>() / (norm(f) * norm(t)))
        .collect();
    let denom: f64 = cos.iter().map(|c| (c / tau).exp()).sum();
    cos.iter().map(|c| (c / tau).exp() / denom).collect()
}

/// Splits a `(J, n, w)` tensor into per-layer token lists.
pub fn layers_of(t: &Tensor) -> Vec<Mat> {
    let (j, n, w) = t.dims3().unwrap();
    let v = vals(t);
    (0..j)
        .map(|l| (0..n).map(|s| v[(l * n + s) * w..][..w].to_vec()).collect())
        .collect()
}

pub fn raster_values(b: &Backbone, s: &LabeledSample) -> Vec<f64> {
    assert_eq!(s.raster.side(), b.image_size());
    s.raster.pixels().iter().map(|&p| p as f64).collect()
}

// ---- finite differences ----

/// Checks the autograd gradient of `loss` w.r.t. `var` at `count` evenly
/// spread entries against central differences. Returns the worst relative
/// error.
pub fn check_gradient(var: &Var, count: usize, loss: &dyn Fn() -> Tensor) -> f64 {
    let grads = loss().backward().unwrap();
    let analytic = vals(grads.get(var.as_tensor()).expect("gradient reaches the variable"));
    let base = vals(var.as_tensor());
    let dims = var.dims().to_vec();
    let stride = (base.len() / count).max(1);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for idx in (0..base.len()).step_by(stride).take(count) {
        let eval_at = |delta: f64| {
            let mut v = base.clone();
            v[idx] += delta;
            var.set(&Tensor::from_vec(v, dims.as_slice(), var.device()).unwrap()).unwrap();
            vals(&loss())[0]
        };
        let numeric = (eval_at(h) - eval_at(-h)) / (2.0 * h);
        var.set(&Tensor::from_vec(base.clone(), dims.as_slice(), var.device()).unwrap()).unwrap();
        let a = analytic[idx];
        let scale = a.abs().max(numeric.abs()).max(1e-6);
        let rel = (a - numeric).abs() / scale;
        worst = worst.max(rel);
    }
    worst
}
