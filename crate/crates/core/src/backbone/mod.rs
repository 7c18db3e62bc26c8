//! Frozen dual-encoder backbones with per-layer prompt injection.
//!
//! A [`Backbone`] bundles a vision tower, a text tower and the similarity
//! head. Every weight is a plain tensor except the layer-norm affine
//! parameters, which are `Var`s so a trainer may opt into tuning them.

pub mod clip;
pub mod similarity;
pub mod text;
pub mod tokenizer;
pub mod toy;
pub mod transformer;
pub mod vision;

use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};

pub use similarity::SimilarityHead;
pub use text::{CategoryTokens, TextConfig, TextEncoder};
pub use transformer::LayerNormParams;
pub use vision::{VisionConfig, VisionEncoder};

use crate::error::{Error, Result};
use crate::nn::to_f64_vec;
use crate::sketch::{PixelNorm, RasterSketch};

pub const TOY_ADAPTER: &str = "toy";
pub const CLIP_ADAPTER: &str = "clip-vit-b16";

/// Static description of a registered adapter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdapterInfo {
    pub name: &'static str,
    pub vision_width: usize,
    pub text_width: usize,
    pub output_dim: usize,
    pub default_prompt_len: usize,
    pub needs_weights: bool,
}

pub const ADAPTERS: [AdapterInfo; 2] = [
    AdapterInfo {
        name: CLIP_ADAPTER,
        vision_width: clip::CLIP_VISION_WIDTH,
        text_width: clip::CLIP_TEXT_WIDTH,
        output_dim: clip::CLIP_OUTPUT_DIM,
        default_prompt_len: 5,
        needs_weights: true,
    },
    AdapterInfo {
        name: TOY_ADAPTER,
        vision_width: 16,
        text_width: 12,
        output_dim: 8,
        default_prompt_len: 5,
        needs_weights: false,
    },
];

pub fn adapter_info(name: &str) -> Result<AdapterInfo> {
    let base = name.split(':').next().unwrap_or(name);
    ADAPTERS
        .iter()
        .find(|a| a.name == base)
        .copied()
        .ok_or_else(|| Error::UnknownAdapter(name.to_string()))
}

/// Loads a backbone by adapter name. `toy` and `toy:<seed>` build the
/// seeded toy backbone (seed 0 by default) and ignore `weights`;
/// `clip-vit-b16` reads a safetensors file.
pub fn load_pretrained(adapter: &str, weights: Option<&Path>) -> Result<Backbone> {
    let info = adapter_info(adapter)?;
    match info.name {
        TOY_ADAPTER => {
            let seed = match adapter.split_once(':') {
                Some((_, s)) => s
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad toy seed in `{adapter}`")))?,
                None => 0,
            };
            let mut backbone = toy::toy_backbone(seed)?;
            backbone.adapter = adapter.to_string();
            Ok(backbone)
        }
        CLIP_ADAPTER => {
            let path = weights.ok_or_else(|| {
                Error::InvalidInput(format!("adapter `{adapter}` needs a weights path"))
            })?;
            clip::load_clip(path, DType::F32)
        }
        _ => unreachable!("registry and loader agree"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tower {
    Vision,
    Text,
}

#[derive(Clone, Debug)]
pub struct Backbone {
    pub adapter: String,
    pub vision: VisionEncoder,
    pub text: TextEncoder,
    pub similarity: SimilarityHead,
    pub pixel_norm: PixelNorm,
    pub device: Device,
    pub dtype: DType,
}

impl Backbone {
    pub fn image_size(&self) -> usize {
        self.vision.config.image_size
    }

    /// Stacks rasters into a `(B, 3, H, W)` tensor.
    pub fn image_batch(&self, rasters: &[&RasterSketch]) -> Result<Tensor> {
        let side = self.image_size();
        let mut values = Vec::with_capacity(rasters.len() * 3 * side * side);
        for r in rasters {
            if r.side() != side {
                return Err(Error::shape("raster side", side, r.side()));
            }
            values.extend_from_slice(r.pixels());
        }
        Ok(Tensor::from_vec(values, (rasters.len(), 3, side, side), &self.device)?
            .to_dtype(self.dtype)?)
    }

    /// Image features `(B, d)` with optional vision prompts `(J, n, d_p)`.
    pub fn encode_images(&self, pixels: &Tensor, prompts: Option<&Tensor>) -> Result<Tensor> {
        self.vision.forward(pixels, prompts)
    }

    /// Text features for a category set; see [`TextEncoder::forward`].
    pub fn encode_text(&self, tokens: &CategoryTokens, prompts: Option<&Tensor>) -> Result<Tensor> {
        self.text.forward(tokens, prompts)
    }

    pub fn tokenize(&self, names: &[String], prompt_len: usize) -> Result<CategoryTokens> {
        self.text.tokenize_categories(names, prompt_len)
    }

    pub fn layer_norms(&self, tower: Tower) -> Vec<(String, &LayerNormParams)> {
        match tower {
            Tower::Vision => self.vision.layer_norms(),
            Tower::Text => self.text.layer_norms(),
        }
    }

    /// Every layer-norm parameter as `(name, var)`, names prefixed with the
    /// tower.
    pub fn layer_norm_vars(&self, tower: Tower) -> Vec<(String, Var)> {
        let prefix = match tower {
            Tower::Vision => "vision",
            Tower::Text => "text",
        };
        self.layer_norms(tower)
            .into_iter()
            .flat_map(|(name, ln)| {
                [
                    (format!("{prefix}.{name}.weight"), ln.weight.clone()),
                    (format!("{prefix}.{name}.bias"), ln.bias.clone()),
                ]
            })
            .collect()
    }

    /// Gives this backbone its own layer-norm storage. Clones otherwise share
    /// it, so tuning one would tune all.
    pub fn fork_layer_norms(&mut self) -> Result<()> {
        let v = &mut self.vision;
        let t = &mut self.text;
        let mut all: Vec<&mut LayerNormParams> = vec![&mut v.pre_ln, &mut v.post_ln, &mut t.final_ln];
        for l in v.layers.iter_mut().chain(t.layers.iter_mut()) {
            all.push(&mut l.ln_1);
            all.push(&mut l.ln_2);
        }
        for ln in all {
            *ln = ln.fork()?;
        }
        Ok(())
    }

    /// Every frozen tensor as `(name, tensor)`.
    pub fn frozen_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<_> = self
            .vision
            .frozen()
            .into_iter()
            .map(|(n, t)| (format!("vision.{n}"), t))
            .collect();
        out.extend(self.text.frozen().into_iter().map(|(n, t)| (format!("text.{n}"), t)));
        out
    }

    /// Value copy of every frozen tensor, for bit-level comparisons.
    pub fn frozen_snapshot(&self) -> Result<Vec<(String, Vec<f64>)>> {
        self.frozen_tensors()
            .into_iter()
            .map(|(n, t)| Ok((n, to_f64_vec(t)?)))
            .collect()
    }

    pub fn layer_norm_snapshot(&self) -> Result<Vec<(String, Vec<f64>)>> {
        [Tower::Vision, Tower::Text]
            .into_iter()
            .flat_map(|t| self.layer_norm_vars(t))
            .map(|(n, v)| Ok((n, to_f64_vec(v.as_tensor())?)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_adapter_dimensions() {
        let info = adapter_info(CLIP_ADAPTER).unwrap();
        assert_eq!(info.vision_width, 768);
        assert_eq!(info.text_width, 512);
        assert_eq!(info.output_dim, 512);
        assert_eq!(info.default_prompt_len, 5);
    }

    #[test]
    fn unknown_adapter_rejected() {
        assert!(matches!(load_pretrained("resnet", None), Err(Error::UnknownAdapter(_))));
    }

    #[test]
    fn clip_without_weights_is_a_load_error() {
        assert!(load_pretrained(CLIP_ADAPTER, None).is_err());
        let missing = Path::new("/nonexistent/model.safetensors");
        assert!(matches!(load_pretrained(CLIP_ADAPTER, Some(missing)), Err(Error::Io { .. })));
    }
}
