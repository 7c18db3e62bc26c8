//! A small deterministic backbone for tests and desk-scale experiments.

use candle_core::{DType, Device, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::text::{TextConfig, TextEncoder};
use super::tokenizer::{ByteTokenizer, Tokenizer};
use super::transformer::{LayerNormParams, Linear, TransformerLayer};
use super::vision::{VisionConfig, VisionEncoder};
use super::{Backbone, SimilarityHead};
use crate::error::Result;
use crate::nn::Init;
use crate::sketch::PixelNorm;

pub const TOY_TEMPERATURE: f64 = 0.07;

pub fn toy_vision_config() -> VisionConfig {
    VisionConfig {
        image_size: 16,
        patch_size: 4,
        width: 16,
        layers: 2,
        heads: 2,
        mlp_dim: 32,
        output_dim: 8,
        ln_eps: 1e-5,
    }
}

pub fn toy_text_config() -> TextConfig {
    TextConfig {
        vocab_size: ByteTokenizer::VOCAB_SIZE,
        context_length: 32,
        width: 12,
        layers: 2,
        heads: 2,
        mlp_dim: 24,
        output_dim: 8,
        ln_eps: 1e-5,
    }
}

fn layer_norm(init: &mut Init<'_, ChaCha8Rng>, width: usize, eps: f64) -> Result<LayerNormParams> {
    Ok(LayerNormParams {
        weight: Var::ones(width, init.dtype, init.device)?,
        bias: init.zeros_var(&[width])?,
        eps,
    })
}

fn dense(init: &mut Init<'_, ChaCha8Rng>, out: usize, inp: usize) -> Result<Linear> {
    let weight = init.normal(&[out, inp], (inp as f64).powf(-0.5))?;
    let bias = init.normal(&[out], 0.02)?;
    Ok(Linear::new(weight, Some(bias)))
}

fn block(
    init: &mut Init<'_, ChaCha8Rng>,
    width: usize,
    heads: usize,
    mlp: usize,
    eps: f64,
) -> Result<TransformerLayer> {
    Ok(TransformerLayer {
        ln_1: layer_norm(init, width, eps)?,
        q_proj: dense(init, width, width)?,
        k_proj: dense(init, width, width)?,
        v_proj: dense(init, width, width)?,
        out_proj: dense(init, width, width)?,
        ln_2: layer_norm(init, width, eps)?,
        fc1: dense(init, mlp, width)?,
        fc2: dense(init, width, mlp)?,
        heads,
    })
}

/// Two layers per tower, `d_p = 16`, `d_t = 12`, `d = 8`, 4x4 patches on
/// 16x16 inputs, byte tokens. All weights derive from `seed`.
pub fn toy_backbone(seed: u64) -> Result<Backbone> {
    let device = Device::Cpu;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = Init {
        rng: &mut rng,
        device: &device,
        dtype: DType::F64,
    };

    let vc = toy_vision_config();
    let patch_dim = 3 * vc.patch_size * vc.patch_size;
    let vision = VisionEncoder {
        patch_embedding: init.normal(&[vc.width, patch_dim], (patch_dim as f64).powf(-0.5))?,
        class_embedding: init.normal(&[vc.width], 1.0)?,
        position_embedding: init.normal(&[vc.patch_count() + 1, vc.width], 0.5)?,
        pre_ln: layer_norm(&mut init, vc.width, vc.ln_eps)?,
        layers: (0..vc.layers)
            .map(|_| block(&mut init, vc.width, vc.heads, vc.mlp_dim, vc.ln_eps))
            .collect::<Result<_>>()?,
        post_ln: layer_norm(&mut init, vc.width, vc.ln_eps)?,
        projection: init.normal(&[vc.output_dim, vc.width], (vc.width as f64).powf(-0.5))?,
        config: vc,
    };

    let tc = toy_text_config();
    let text = TextEncoder {
        token_embedding: init.normal(&[tc.vocab_size, tc.width], 1.0)?,
        position_embedding: init.normal(&[tc.context_length, tc.width], 0.5)?,
        layers: (0..tc.layers)
            .map(|_| block(&mut init, tc.width, tc.heads, tc.mlp_dim, tc.ln_eps))
            .collect::<Result<_>>()?,
        final_ln: layer_norm(&mut init, tc.width, tc.ln_eps)?,
        projection: init.normal(&[tc.output_dim, tc.width], (tc.width as f64).powf(-0.5))?,
        tokenizer: Tokenizer::Bytes(ByteTokenizer),
        config: tc,
    };

    Ok(Backbone {
        adapter: super::TOY_ADAPTER.to_string(),
        vision,
        text,
        similarity: SimilarityHead::new(TOY_TEMPERATURE)?,
        pixel_norm: PixelNorm::SYMMETRIC,
        device,
        dtype: DType::F64,
    })
}
