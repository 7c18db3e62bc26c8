//! CLIP ViT-B/16 weights in the Hugging Face safetensors layout.
//!
//! The loader expects `model.safetensors` (or any safetensors file with the
//! same tensor names) plus `vocab.json` and `merges.txt` in the same
//! directory.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};

use super::text::{TextConfig, TextEncoder};
use super::tokenizer::{ClipBpe, Tokenizer};
use super::transformer::{LayerNormParams, Linear, TransformerLayer};
use super::vision::{VisionConfig, VisionEncoder};
use super::{Backbone, SimilarityHead, CLIP_ADAPTER};
use crate::error::{Error, Result};
use crate::sketch::PixelNorm;

pub const CLIP_VISION_WIDTH: usize = 768;
pub const CLIP_TEXT_WIDTH: usize = 512;
pub const CLIP_OUTPUT_DIM: usize = 512;
const HEAD_DIM: usize = 64;
const LN_EPS: f64 = 1e-5;

struct Weights {
    tensors: HashMap<String, Tensor>,
    dtype: DType,
}

impl Weights {
    fn get(&self, name: &str) -> Result<Tensor> {
        let t = self.tensors.get(name).ok_or_else(|| Error::Architecture {
            adapter: CLIP_ADAPTER.into(),
            details: format!("missing tensor `{name}`"),
        })?;
        Ok(t.to_dtype(self.dtype)?)
    }

    fn linear(&self, prefix: &str, bias: bool) -> Result<Linear> {
        let weight = self.get(&format!("{prefix}.weight"))?;
        let bias = bias.then(|| self.get(&format!("{prefix}.bias"))).transpose()?;
        Ok(Linear::new(weight, bias))
    }

    fn layer_norm(&self, prefix: &str) -> Result<LayerNormParams> {
        Ok(LayerNormParams {
            weight: Var::from_tensor(&self.get(&format!("{prefix}.weight"))?)?,
            bias: Var::from_tensor(&self.get(&format!("{prefix}.bias"))?)?,
            eps: LN_EPS,
        })
    }

    fn block(&self, prefix: &str, heads: usize) -> Result<TransformerLayer> {
        Ok(TransformerLayer {
            ln_1: self.layer_norm(&format!("{prefix}.layer_norm1"))?,
            q_proj: self.linear(&format!("{prefix}.self_attn.q_proj"), true)?,
            k_proj: self.linear(&format!("{prefix}.self_attn.k_proj"), true)?,
            v_proj: self.linear(&format!("{prefix}.self_attn.v_proj"), true)?,
            out_proj: self.linear(&format!("{prefix}.self_attn.out_proj"), true)?,
            ln_2: self.layer_norm(&format!("{prefix}.layer_norm2"))?,
            fc1: self.linear(&format!("{prefix}.mlp.fc1"), true)?,
            fc2: self.linear(&format!("{prefix}.mlp.fc2"), true)?,
            heads,
        })
    }

    fn count_layers(&self, prefix: &str) -> usize {
        self.tensors
            .keys()
            .filter_map(|k| k.strip_prefix(prefix))
            .filter_map(|rest| rest.split('.').next()?.parse::<usize>().ok())
            .max()
            .map_or(0, |i| i + 1)
    }
}

fn mismatch(what: &str, expected: impl std::fmt::Debug, found: impl std::fmt::Debug) -> Error {
    Error::Architecture {
        adapter: CLIP_ADAPTER.into(),
        details: format!("{what}: expected {expected:?}, found {found:?}"),
    }
}

pub fn load_clip(path: &Path, dtype: DType) -> Result<Backbone> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "weights file not found"),
        ));
    }
    let device = Device::Cpu;
    let tensors = candle_core::safetensors::load(path, &device)?;
    let w = Weights { tensors, dtype };

    let patch = w.get("vision_model.embeddings.patch_embedding.weight")?;
    let (width, channels, p, p2) = patch.dims4()?;
    if channels != 3 || p != p2 {
        return Err(mismatch("patch embedding", (CLIP_VISION_WIDTH, 3, 16, 16), patch.dims()));
    }
    if width != CLIP_VISION_WIDTH {
        return Err(mismatch("vision width d_p", CLIP_VISION_WIDTH, width));
    }
    let positions = w.get("vision_model.embeddings.position_embedding.weight")?;
    let grid = ((positions.dim(0)? - 1) as f64).sqrt().round() as usize;
    let visual_projection = w.get("visual_projection.weight")?;
    if visual_projection.dims() != [CLIP_OUTPUT_DIM, CLIP_VISION_WIDTH] {
        return Err(mismatch(
            "visual projection",
            [CLIP_OUTPUT_DIM, CLIP_VISION_WIDTH],
            visual_projection.dims(),
        ));
    }
    let vision_layers = w.count_layers("vision_model.encoder.layers.");
    let fc1 = w.get("vision_model.encoder.layers.0.mlp.fc1.weight")?;
    let vc = VisionConfig {
        image_size: grid * p,
        patch_size: p,
        width,
        layers: vision_layers,
        heads: width / HEAD_DIM,
        mlp_dim: fc1.dim(0)?,
        output_dim: CLIP_OUTPUT_DIM,
        ln_eps: LN_EPS,
    };
    let vision = VisionEncoder {
        patch_embedding: patch.reshape((width, 3 * p * p))?,
        class_embedding: w.get("vision_model.embeddings.class_embedding")?,
        position_embedding: positions,
        pre_ln: w.layer_norm("vision_model.pre_layrnorm")?,
        layers: (0..vision_layers)
            .map(|i| w.block(&format!("vision_model.encoder.layers.{i}"), vc.heads))
            .collect::<Result<_>>()?,
        post_ln: w.layer_norm("vision_model.post_layernorm")?,
        projection: visual_projection,
        config: vc,
    };

    let tokens = w.get("text_model.embeddings.token_embedding.weight")?;
    let (vocab_size, text_width) = tokens.dims2()?;
    if text_width != CLIP_TEXT_WIDTH {
        return Err(mismatch("text width d_t", CLIP_TEXT_WIDTH, text_width));
    }
    let text_projection = w.get("text_projection.weight")?;
    if text_projection.dims() != [CLIP_OUTPUT_DIM, CLIP_TEXT_WIDTH] {
        return Err(mismatch(
            "text projection",
            [CLIP_OUTPUT_DIM, CLIP_TEXT_WIDTH],
            text_projection.dims(),
        ));
    }
    let text_positions = w.get("text_model.embeddings.position_embedding.weight")?;
    let text_layers = w.count_layers("text_model.encoder.layers.");
    let text_fc1 = w.get("text_model.encoder.layers.0.mlp.fc1.weight")?;
    let tc = TextConfig {
        vocab_size,
        context_length: text_positions.dim(0)?,
        width: text_width,
        layers: text_layers,
        heads: text_width / HEAD_DIM,
        mlp_dim: text_fc1.dim(0)?,
        output_dim: CLIP_OUTPUT_DIM,
        ln_eps: LN_EPS,
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    let text = TextEncoder {
        token_embedding: tokens,
        position_embedding: text_positions,
        layers: (0..text_layers)
            .map(|i| w.block(&format!("text_model.encoder.layers.{i}"), tc.heads))
            .collect::<Result<_>>()?,
        final_ln: w.layer_norm("text_model.final_layer_norm")?,
        projection: text_projection,
        tokenizer: Tokenizer::Bpe(ClipBpe::from_dir(dir)?),
        config: tc,
    };

    let temperature = match w.tensors.get("logit_scale") {
        Some(t) => 1.0 / t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?[0].exp(),
        None => 0.01,
    };

    Ok(Backbone {
        adapter: CLIP_ADAPTER.into(),
        vision,
        text,
        similarity: SimilarityHead::new(temperature)?,
        pixel_norm: PixelNorm::CLIP,
        device,
        dtype,
    })
}
