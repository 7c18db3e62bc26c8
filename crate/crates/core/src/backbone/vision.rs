use candle_core::{IndexOp, Tensor};
use serde::{Deserialize, Serialize};

use super::transformer::{LayerNormParams, TransformerLayer};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisionConfig {
    pub image_size: usize,
    pub patch_size: usize,
    /// Token width `d_p`.
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    /// Joint embedding width `d`.
    pub output_dim: usize,
    pub ln_eps: f64,
}

impl VisionConfig {
    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    /// Number of patch tokens `r`.
    pub fn patch_count(&self) -> usize {
        self.grid() * self.grid()
    }
}

/// Frozen ViT image tower with prompt slots appended after the patch tokens.
#[derive(Clone, Debug)]
pub struct VisionEncoder {
    pub config: VisionConfig,
    /// `(width, 3 * patch * patch)`, a flattened stride-`patch` convolution.
    pub patch_embedding: Tensor,
    pub class_embedding: Tensor,
    pub position_embedding: Tensor,
    pub pre_ln: LayerNormParams,
    pub layers: Vec<TransformerLayer>,
    pub post_ln: LayerNormParams,
    /// `(output_dim, width)`.
    pub projection: Tensor,
}

impl VisionEncoder {
    /// Splits `(batch, 3, H, W)` images into `(batch, r, 3 * p * p)` patches,
    /// channel-major within a patch.
    pub fn patchify(&self, pixels: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = pixels.dims4()?;
        let cfg = &self.config;
        if c != 3 || h != cfg.image_size || w != cfg.image_size {
            return Err(Error::shape(
                "vision input",
                (3, cfg.image_size, cfg.image_size),
                (c, h, w),
            ));
        }
        let (g, p) = (cfg.grid(), cfg.patch_size);
        Ok(pixels
            .reshape(vec![b, 3, g, p, g, p])?
            .permute(vec![0, 2, 4, 1, 3, 5])?
            .contiguous()?
            .reshape((b, g * g, 3 * p * p))?)
    }

    /// Token stream `[class, patches]` after the pre-transformer norm.
    pub fn embed(&self, pixels: &Tensor) -> Result<Tensor> {
        let patches = self.patchify(pixels)?;
        let b = patches.dim(0)?;
        let width = self.config.width;
        let patch_tokens = patches.broadcast_matmul(&self.patch_embedding.t()?)?;
        let cls = self
            .class_embedding
            .reshape((1, 1, width))?
            .broadcast_as((b, 1, width))?;
        let tokens = Tensor::cat(&[&cls, &patch_tokens], 1)?.broadcast_add(&self.position_embedding)?;
        self.pre_ln.forward(&tokens)
    }

    /// Encodes a batch of images. `prompts`, when given, has shape
    /// `(J, prompt_len, width)`: layers `1..=J` receive fresh prompts in
    /// their prompt slots, the prompt outputs of layer `J` are kept and
    /// propagate through the remaining layers. The class token's final state
    /// is normalized and projected to `(batch, output_dim)`.
    pub fn forward(&self, pixels: &Tensor, prompts: Option<&Tensor>) -> Result<Tensor> {
        let mut x = self.embed(pixels)?;
        let b = x.dim(0)?;
        let base = 1 + self.config.patch_count();
        let (depth, len) = self.check_prompts(prompts)?;
        for (i, layer) in self.layers.iter().enumerate() {
            if i < depth && len > 0 {
                let p = prompts.unwrap().i(i)?.unsqueeze(0)?.broadcast_as((
                    b,
                    len,
                    self.config.width,
                ))?;
                let head = if i == 0 { x } else { x.narrow(1, 0, base)? };
                x = Tensor::cat(&[&head, &p], 1)?;
            }
            x = layer.forward(&x, None)?;
        }
        let cls = self.post_ln.forward(&x.i((.., 0))?)?;
        Ok(cls.matmul(&self.projection.t()?)?)
    }

    fn check_prompts(&self, prompts: Option<&Tensor>) -> Result<(usize, usize)> {
        let Some(p) = prompts else { return Ok((0, 0)) };
        let (depth, len, width) = p.dims3()?;
        if depth == 0 || depth > self.config.layers {
            return Err(Error::Config(format!(
                "vision prompt depth {depth} outside 1..={}",
                self.config.layers
            )));
        }
        if width != self.config.width {
            return Err(Error::shape("vision prompt, layer 0", self.config.width, width));
        }
        Ok((depth, len))
    }

    pub fn layer_norms(&self) -> Vec<(String, &LayerNormParams)> {
        let mut out = vec![("pre_ln".to_string(), &self.pre_ln)];
        for (i, l) in self.layers.iter().enumerate() {
            let [a, b] = l.layer_norms();
            out.push((format!("layers.{i}.ln_1"), a));
            out.push((format!("layers.{i}.ln_2"), b));
        }
        out.push(("post_ln".to_string(), &self.post_ln));
        out
    }

    pub fn frozen(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("patch_embedding".to_string(), &self.patch_embedding),
            ("class_embedding".to_string(), &self.class_embedding),
            ("position_embedding".to_string(), &self.position_embedding),
            ("projection".to_string(), &self.projection),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(l.frozen().into_iter().map(|(n, t)| (format!("layers.{i}.{n}"), t)));
        }
        out
    }
}
