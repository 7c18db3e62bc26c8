use candle_core::{DType, Device, IndexOp, Tensor};
use serde::{Deserialize, Serialize};

use super::tokenizer::Tokenizer;
use super::transformer::{LayerNormParams, TransformerLayer};
use crate::error::{Error, Result};
use crate::nn::MASK_VALUE;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextConfig {
    pub vocab_size: usize,
    pub context_length: usize,
    /// Token width `d_t`.
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    pub output_dim: usize,
    pub ln_eps: f64,
}

/// Layer-0 token streams `[start, prompt slots, category tokens, end, pad]`
/// for a fixed category list. Prompt slots hold only their position
/// embedding; prompts are added per forward pass. Everything here is
/// independent of the prompt values, so it is built once per category set.
#[derive(Clone, Debug)]
pub struct CategoryTokens {
    pub names: Vec<String>,
    pub prompt_len: usize,
    /// `(K, L, width)`.
    pub embeddings: Tensor,
    /// `(prompt_len, width)` position embeddings of the prompt slots.
    pub slot_positions: Option<Tensor>,
    /// `(K, L, 1)` one-hot selector of each stream's end token.
    pub end_select: Tensor,
    /// `(L, L)` causal attention bias.
    pub mask: Tensor,
    pub end_positions: Vec<usize>,
}

impl CategoryTokens {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.end_select.dim(1).unwrap_or(0)
    }
}

/// Frozen causal text transformer, pooled at the end token.
#[derive(Clone, Debug)]
pub struct TextEncoder {
    pub config: TextConfig,
    pub token_embedding: Tensor,
    pub position_embedding: Tensor,
    pub layers: Vec<TransformerLayer>,
    pub final_ln: LayerNormParams,
    /// `(output_dim, width)`.
    pub projection: Tensor,
    pub tokenizer: Tokenizer,
}

impl TextEncoder {
    pub fn tokenize_categories(&self, names: &[String], prompt_len: usize) -> Result<CategoryTokens> {
        if names.is_empty() {
            return Err(Error::InvalidInput("empty category list".into()));
        }
        let device = self.token_embedding.device().clone();
        let dtype = self.token_embedding.dtype();
        let start = self.tokenizer.start_token();
        let end = self.tokenizer.end_token();
        let streams: Vec<Vec<u32>> = names
            .iter()
            .map(|name| {
                let mut ids = vec![start];
                ids.extend(std::iter::repeat_n(0, prompt_len));
                ids.extend(self.tokenizer.encode(name));
                ids.push(end);
                ids
            })
            .collect();
        let seq_len = streams.iter().map(Vec::len).max().unwrap();
        if seq_len > self.config.context_length {
            return Err(Error::InvalidInput(format!(
                "category token stream of length {seq_len} exceeds the text context of {}",
                self.config.context_length
            )));
        }
        let k = names.len();
        let mut ids = Vec::with_capacity(k * seq_len);
        let mut select = vec![0.0f64; k * seq_len];
        let mut end_positions = Vec::with_capacity(k);
        for (row, s) in streams.iter().enumerate() {
            ids.extend(s.iter().copied());
            ids.extend(std::iter::repeat_n(0, seq_len - s.len()));
            select[row * seq_len + s.len() - 1] = 1.0;
            end_positions.push(s.len() - 1);
        }
        let ids = Tensor::from_vec(ids, (k * seq_len,), &device)?;
        let positions = self.position_embedding.narrow(0, 0, seq_len)?;
        let tokens = self
            .token_embedding
            .index_select(&ids, 0)?
            .reshape((k, seq_len, self.config.width))?;
        // prompt slots contribute only their position embedding
        let mut slot_mask = vec![1.0f64; seq_len];
        for m in slot_mask.iter_mut().skip(1).take(prompt_len) {
            *m = 0.0;
        }
        let slot_mask = Tensor::from_vec(slot_mask, (1, seq_len, 1), &device)?.to_dtype(dtype)?;
        let embeddings = tokens.broadcast_mul(&slot_mask)?.broadcast_add(&positions)?;
        let slot_positions = (prompt_len > 0)
            .then(|| positions.narrow(0, 1, prompt_len))
            .transpose()?;
        Ok(CategoryTokens {
            names: names.to_vec(),
            prompt_len,
            embeddings,
            slot_positions,
            end_select: Tensor::from_vec(select, (k, seq_len, 1), &device)?.to_dtype(dtype)?,
            mask: causal_mask(seq_len, &device, dtype)?,
            end_positions,
        })
    }

    /// Text features for every category.
    ///
    /// With `prompts = None` the token streams must have no prompt slots and
    /// the result is `(K, output_dim)`. Shared prompts `(J, n, width)` give
    /// `(K, output_dim)`; per-instance prompts `(B, J, n, width)` give
    /// `(B, K, output_dim)`. Layers `1..=J` receive fresh prompts; later
    /// layers propagate the prompt outputs of layer `J`.
    pub fn forward(&self, tokens: &CategoryTokens, prompts: Option<&Tensor>) -> Result<Tensor> {
        match prompts {
            None => {
                if tokens.prompt_len != 0 {
                    return Err(Error::InvalidInput(
                        "token streams have prompt slots but no prompts were given".into(),
                    ));
                }
                let out = self.run(tokens, None, 1)?;
                Ok(out.squeeze(0)?)
            }
            Some(p) if p.rank() == 3 => Ok(self.forward(tokens, Some(&p.unsqueeze(0)?))?.squeeze(0)?),
            Some(p) => {
                let (b, depth, len, width) = p.dims4()?;
                if depth == 0 || depth > self.config.layers {
                    return Err(Error::Config(format!(
                        "text prompt depth {depth} outside 1..={}",
                        self.config.layers
                    )));
                }
                if width != self.config.width {
                    return Err(Error::shape("text prompt, layer 0", self.config.width, width));
                }
                if len != tokens.prompt_len {
                    return Err(Error::shape("text prompt length", tokens.prompt_len, len));
                }
                self.run(tokens, Some(p), b)
            }
        }
    }

    fn run(&self, tokens: &CategoryTokens, prompts: Option<&Tensor>, b: usize) -> Result<Tensor> {
        let k = tokens.len();
        let l = tokens.seq_len();
        let w = self.config.width;
        let n = tokens.prompt_len;
        let depth = prompts.map(|p| p.dim(1)).transpose()?.unwrap_or(0);
        let per_stream = |layer: usize| -> Result<Tensor> {
            let p = prompts.unwrap().i((.., layer))?;
            Ok(p.unsqueeze(1)?
                .broadcast_as((b, k, n, w))?
                .reshape((b * k, n, w))?)
        };
        let mut x = tokens
            .embeddings
            .unsqueeze(0)?
            .broadcast_as((b, k, l, w))?
            .reshape((b * k, l, w))?;
        if n > 0 && depth > 0 {
            let first = per_stream(0)?.broadcast_add(tokens.slot_positions.as_ref().unwrap())?;
            x = splice(&x, &first, n)?;
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 && i < depth && n > 0 {
                x = splice(&x, &per_stream(i)?, n)?;
            }
            x = layer.forward(&x, Some(&tokens.mask))?;
        }
        let pooled = x
            .reshape((b, k, l, w))?
            .broadcast_mul(&tokens.end_select.unsqueeze(0)?)?
            .sum(2)?;
        let pooled = self.final_ln.forward(&pooled)?;
        Ok(pooled.broadcast_matmul(&self.projection.t()?)?)
    }

    pub fn layer_norms(&self) -> Vec<(String, &LayerNormParams)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let [a, b] = l.layer_norms();
            out.push((format!("layers.{i}.ln_1"), a));
            out.push((format!("layers.{i}.ln_2"), b));
        }
        out.push(("final_ln".to_string(), &self.final_ln));
        out
    }

    pub fn frozen(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("token_embedding".to_string(), &self.token_embedding),
            ("position_embedding".to_string(), &self.position_embedding),
            ("projection".to_string(), &self.projection),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(l.frozen().into_iter().map(|(n, t)| (format!("layers.{i}.{n}"), t)));
        }
        out
    }
}

/// Replaces positions `1..=n` of `(batch, L, width)` streams.
fn splice(x: &Tensor, prompts: &Tensor, n: usize) -> Result<Tensor> {
    let l = x.dim(1)?;
    Ok(Tensor::cat(
        &[&x.narrow(1, 0, 1)?, prompts, &x.narrow(1, 1 + n, l - 1 - n)?],
        1,
    )?)
}

fn causal_mask(l: usize, device: &Device, dtype: DType) -> Result<Tensor> {
    let values: Vec<f64> = (0..l)
        .flat_map(|i| (0..l).map(move |j| if j > i { MASK_VALUE } else { 0.0 }))
        .collect();
    Ok(Tensor::from_vec(values, (l, l), device)?.to_dtype(dtype)?)
}
