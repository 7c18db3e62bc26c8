//! Pre-norm transformer blocks in the CLIP layout.

use candle_core::{Tensor, Var, D};

use crate::error::Result;
use crate::nn::{layer_norm, linear, quick_gelu, softmax_last};

/// Frozen weight matrix with optional bias.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Option<Tensor>) -> Self {
        Self { weight, bias }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        linear(x, &self.weight, self.bias.as_ref())
    }
}

/// Layer-norm affine parameters. These are the only backbone parameters
/// that may be tuned, so they live in `Var`s.
#[derive(Clone, Debug)]
pub struct LayerNormParams {
    pub weight: Var,
    pub bias: Var,
    pub eps: f64,
}

impl LayerNormParams {
    /// Copy backed by fresh storage, so tuning it leaves `self` untouched.
    pub fn fork(&self) -> Result<Self> {
        Ok(Self {
            weight: Var::from_tensor(&self.weight.as_tensor().copy()?)?,
            bias: Var::from_tensor(&self.bias.as_tensor().copy()?)?,
            eps: self.eps,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        layer_norm(x, self.weight.as_tensor(), self.bias.as_tensor(), self.eps)
    }
}

#[derive(Clone, Debug)]
pub struct TransformerLayer {
    pub ln_1: LayerNormParams,
    pub q_proj: Linear,
    pub k_proj: Linear,
    pub v_proj: Linear,
    pub out_proj: Linear,
    pub ln_2: LayerNormParams,
    pub fc1: Linear,
    pub fc2: Linear,
    pub heads: usize,
}

impl TransformerLayer {
    /// `x` is `(batch, tokens, width)`; `mask` is an additive
    /// `(tokens, tokens)` attention bias.
    pub fn forward(&self, x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let h = self.attention(&self.ln_1.forward(x)?, mask)?;
        let x = (x + h)?;
        let h = self.fc2.forward(&quick_gelu(&self.fc1.forward(&self.ln_2.forward(&x)?)?)?)?;
        Ok((x + h)?)
    }

    fn attention(&self, x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let (b, n, width) = x.dims3()?;
        let head_dim = width / self.heads;
        let split = |t: Tensor| -> Result<Tensor> {
            Ok(t.reshape((b, n, self.heads, head_dim))?
                .transpose(1, 2)?
                .contiguous()?)
        };
        let q = split((self.q_proj.forward(x)? * (head_dim as f64).powf(-0.5))?)?;
        let k = split(self.k_proj.forward(x)?)?;
        let v = split(self.v_proj.forward(x)?)?;
        let mut scores = q.matmul(&k.transpose(D::Minus2, D::Minus1)?.contiguous()?)?;
        if let Some(mask) = mask {
            scores = scores.broadcast_add(mask)?;
        }
        let attn = softmax_last(&scores)?;
        let out = attn
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, n, width))?;
        self.out_proj.forward(&out)
    }

    pub fn layer_norms(&self) -> [&LayerNormParams; 2] {
        [&self.ln_1, &self.ln_2]
    }

    /// Frozen tensors keyed by local name.
    pub fn frozen(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (name, l) in [
            ("q_proj", &self.q_proj),
            ("k_proj", &self.k_proj),
            ("v_proj", &self.v_proj),
            ("out_proj", &self.out_proj),
            ("fc1", &self.fc1),
            ("fc2", &self.fc2),
        ] {
            out.push((format!("{name}.weight"), &l.weight));
            if let Some(b) = &l.bias {
                out.push((format!("{name}.bias"), b));
            }
        }
        out
    }
}
