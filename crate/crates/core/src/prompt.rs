//! Learnable prompt parameters and the instance-conditional text prompt
//! stack.

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{linear, Init};

pub const PROMPT_INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptShape {
    /// Number of layers receiving fresh prompts, `J`.
    pub depth: usize,
    /// Tokens per prompt.
    pub prompt_len: usize,
    /// Vision token width `d_p`.
    pub vision_width: usize,
    /// Text token width `d_t`.
    pub text_width: usize,
    /// Joint feature width `d`.
    pub feature_dim: usize,
    pub meta_hidden: usize,
}

impl PromptShape {
    /// Meta-Net hidden width: `d / 16`, never below 4.
    pub fn default_meta_hidden(feature_dim: usize) -> usize {
        (feature_dim / 16).max(4)
    }
}

/// Linear-ReLU-Linear map from a sketch feature to a `(prompt_len, d_t)`
/// context bias.
#[derive(Clone, Debug)]
pub struct MetaNet {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub prompt_len: usize,
    pub text_width: usize,
}

impl MetaNet {
    /// `(B, d)` features to `(B, prompt_len, d_t)` contexts.
    pub fn forward(&self, features: &Tensor) -> Result<Tensor> {
        let h = linear(features, self.w1.as_tensor(), Some(self.b1.as_tensor()))?.relu()?;
        let out = linear(&h, self.w2.as_tensor(), Some(self.b2.as_tensor()))?;
        let b = features.dim(0)?;
        Ok(out.reshape((b, self.prompt_len, self.text_width))?)
    }
}

/// Vision prompts `(J, n, d_p)`, text prompts `(J, n, d_t)` and the Meta-Net.
#[derive(Clone, Debug)]
pub struct PromptState {
    pub shape: PromptShape,
    pub vision: Var,
    pub text: Var,
    pub meta: MetaNet,
}

impl PromptState {
    /// Draws every prompt entry from `N(0, 0.02)`. With `init_text`, the first
    /// rows of the layer-0 text prompt are overwritten with the given
    /// `(m, d_t)` token embeddings; `m` may not exceed `prompt_len`.
    pub fn init(
        seed: u64,
        shape: PromptShape,
        init_text: Option<&Tensor>,
        device: &Device,
        dtype: DType,
    ) -> Result<Self> {
        if shape.depth == 0 {
            return Err(Error::Config("prompt depth must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init {
            rng: &mut rng,
            device,
            dtype,
        };
        let (j, n) = (shape.depth, shape.prompt_len);
        let vision = init.normal(&[j, n, shape.vision_width], PROMPT_INIT_STD)?;
        let mut text = init.normal(&[j, n, shape.text_width], PROMPT_INIT_STD)?;
        if let Some(phrase) = init_text {
            let (m, width) = phrase.dims2()?;
            if m > n {
                return Err(Error::Config(format!(
                    "prompt init phrase has {m} tokens but prompt_len is {n}"
                )));
            }
            if width != shape.text_width {
                return Err(Error::shape("prompt init phrase", shape.text_width, width));
            }
            if m > 0 {
                let first = text.get(0)?;
                let first = Tensor::cat(&[&phrase.to_dtype(dtype)?, &first.narrow(0, m, n - m)?], 0)?;
                let rest = text.narrow(0, 1, j - 1)?;
                text = Tensor::cat(&[&first.unsqueeze(0)?, &rest], 0)?;
            }
        }
        let d = shape.feature_dim;
        let h = shape.meta_hidden;
        let meta = MetaNet {
            w1: init.var(&[h, d], (d as f64).powf(-0.5))?,
            b1: init.zeros_var(&[h])?,
            w2: init.var(&[n * shape.text_width, h], PROMPT_INIT_STD)?,
            b2: init.zeros_var(&[n * shape.text_width])?,
            prompt_len: n,
            text_width: shape.text_width,
        };
        Ok(Self {
            shape,
            vision: Var::from_tensor(&vision)?,
            text: Var::from_tensor(&text)?,
            meta,
        })
    }

    /// Instance-specific context `pi = H(f_s)`, `(B, n, d_t)`.
    pub fn meta_context(&self, features: &Tensor) -> Result<Tensor> {
        self.meta.forward(features)
    }

    /// `{v_t[j] + pi + eta}` for every layer `j`, `(B, J, n, d_t)`.
    pub fn compose_text(&self, pi: &Tensor, eta: &Tensor) -> Result<Tensor> {
        compose_text_prompts(self.text.as_tensor(), pi, eta)
    }

    pub fn prompt_vars(&self) -> Vec<(String, Var)> {
        vec![
            ("prompts.vision".into(), self.vision.clone()),
            ("prompts.text".into(), self.text.clone()),
        ]
    }

    pub fn meta_vars(&self) -> Vec<(String, Var)> {
        vec![
            ("meta.w1".into(), self.meta.w1.clone()),
            ("meta.b1".into(), self.meta.b1.clone()),
            ("meta.w2".into(), self.meta.w2.clone()),
            ("meta.b2".into(), self.meta.b2.clone()),
        ]
    }
}

/// Adds the same context `pi` and abstraction prompt `eta` (each
/// `(B, n, d_t)`) to every layer of the text prompts `(J, n, d_t)`.
pub fn compose_text_prompts(text: &Tensor, pi: &Tensor, eta: &Tensor) -> Result<Tensor> {
    let (j, n, w) = text.dims3()?;
    for (name, t) in [("context", pi), ("abstraction prompt", eta)] {
        let dims = t.dims();
        if dims.len() != 3 || dims[1] != n || dims[2] != w {
            return Err(Error::shape(name, ("B", n, w), dims));
        }
    }
    if pi.dim(0)? != eta.dim(0)? {
        return Err(Error::shape("abstraction prompt batch", pi.dim(0)?, eta.dim(0)?));
    }
    let b = pi.dim(0)?;
    let shift = (pi + eta)?.unsqueeze(1)?;
    Ok(text
        .unsqueeze(0)?
        .broadcast_as((b, j, n, w))?
        .broadcast_add(&shift)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::to_f64_vec;

    fn shape(depth: usize) -> PromptShape {
        PromptShape {
            depth,
            prompt_len: 5,
            vision_width: 16,
            text_width: 12,
            feature_dim: 8,
            meta_hidden: 4,
        }
    }

    fn dev() -> Device {
        Device::Cpu
    }

    #[test]
    fn same_seed_same_state() {
        let a = PromptState::init(3, shape(2), None, &dev(), DType::F64).unwrap();
        let b = PromptState::init(3, shape(2), None, &dev(), DType::F64).unwrap();
        assert_eq!(
            to_f64_vec(a.text.as_tensor()).unwrap(),
            to_f64_vec(b.text.as_tensor()).unwrap()
        );
        assert_eq!(
            to_f64_vec(a.meta.w1.as_tensor()).unwrap(),
            to_f64_vec(b.meta.w1.as_tensor()).unwrap()
        );
    }

    #[test]
    fn depth_one_allocates_only_shallow_prompts() {
        let s = PromptState::init(0, shape(1), None, &dev(), DType::F64).unwrap();
        assert_eq!(s.vision.dims(), &[1, 5, 16]);
        assert_eq!(s.text.dims(), &[1, 5, 12]);
        assert!(PromptState::init(0, shape(0), None, &dev(), DType::F64).is_err());
    }

    #[test]
    fn sampled_prompt_std_is_close_to_init_std() {
        let mut sh = shape(9);
        sh.prompt_len = 5;
        sh.vision_width = 256;
        let s = PromptState::init(11, sh, None, &dev(), DType::F64).unwrap();
        let v = to_f64_vec(s.vision.as_tensor()).unwrap();
        assert!(v.len() >= 10_000);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        assert!((std - PROMPT_INIT_STD).abs() < 0.1 * PROMPT_INIT_STD, "{std}");
    }

    #[test]
    fn init_phrase_fills_first_text_slots() {
        let phrase = Tensor::ones((2, 12), DType::F64, &dev()).unwrap();
        let s = PromptState::init(1, shape(3), Some(&phrase), &dev(), DType::F64).unwrap();
        let first = to_f64_vec(&s.text.as_tensor().get(0).unwrap()).unwrap();
        assert!(first[..24].iter().all(|&x| x == 1.0));
        assert!(first[24..].iter().all(|&x| x != 1.0));
        let long = Tensor::ones((6, 12), DType::F64, &dev()).unwrap();
        assert!(PromptState::init(1, shape(3), Some(&long), &dev(), DType::F64).is_err());
    }

    #[test]
    fn zero_meta_net_gives_zero_context() {
        let s = PromptState::init(1, shape(2), None, &dev(), DType::F64).unwrap();
        for v in [&s.meta.w1, &s.meta.w2] {
            v.set(&v.zeros_like().unwrap()).unwrap();
        }
        let f = Tensor::ones((3, 8), DType::F64, &dev()).unwrap();
        let pi = to_f64_vec(&s.meta_context(&f).unwrap()).unwrap();
        assert!(pi.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn scalar_meta_net_arithmetic() {
        let one = |v: f64| Var::from_tensor(&Tensor::new(&[[v]], &dev()).unwrap()).unwrap();
        let zero = || Var::from_tensor(&Tensor::new(&[0.0f64], &dev()).unwrap()).unwrap();
        let net = MetaNet {
            w1: one(3.0),
            b1: zero(),
            w2: one(0.5),
            b2: zero(),
            prompt_len: 1,
            text_width: 1,
        };
        let f = Tensor::new(&[[2.0f64]], &dev()).unwrap();
        assert_eq!(to_f64_vec(&net.forward(&f).unwrap()).unwrap(), vec![3.0]);
        let f = Tensor::new(&[[-2.0f64]], &dev()).unwrap();
        assert_eq!(to_f64_vec(&net.forward(&f).unwrap()).unwrap(), vec![0.0]);
    }

    #[test]
    fn compose_rejects_mismatched_shapes() {
        let v = Tensor::zeros((2, 5, 12), DType::F64, &dev()).unwrap();
        let pi = Tensor::zeros((1, 4, 12), DType::F64, &dev()).unwrap();
        let eta = Tensor::zeros((1, 5, 12), DType::F64, &dev()).unwrap();
        assert!(compose_text_prompts(&v, &pi, &eta).is_err());
    }
}
