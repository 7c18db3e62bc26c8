//! Three-level abstraction codebook, its classifier, and Dirichlet
//! abstraction mixup.

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{linear, softmax_last, Init};
use crate::sketch::Abstraction;

/// Floor applied to probabilities before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

pub const DEFAULT_MIX_ALPHA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    #[default]
    Linear,
    TwoLayer,
}

/// `C_theta`: `d -> 3` logits, either linear or Linear-ReLU-Linear.
#[derive(Clone, Debug)]
pub struct AbstractionClassifier {
    pub layers: Vec<(Var, Var)>,
}

impl AbstractionClassifier {
    pub fn logits(&self, features: &Tensor) -> Result<Tensor> {
        let mut x = features.clone();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            if i > 0 {
                x = x.relu()?;
            }
            x = linear(&x, w.as_tensor(), Some(b.as_tensor()))?;
        }
        Ok(x)
    }
}

#[derive(Clone, Debug)]
pub struct AbstractionCodebook {
    /// `(3, n, d_t)`, rows ordered low, medium, high.
    pub codes: Var,
    pub classifier: AbstractionClassifier,
}

impl AbstractionCodebook {
    pub fn init<R: Rng>(
        init: &mut Init<'_, R>,
        feature_dim: usize,
        prompt_len: usize,
        text_width: usize,
        kind: ClassifierKind,
    ) -> Result<Self> {
        let codes = init.var(&[3, prompt_len, text_width], 0.02)?;
        let d = feature_dim;
        let layers = match kind {
            ClassifierKind::Linear => vec![(init.var(&[3, d], (d as f64).powf(-0.5))?, init.zeros_var(&[3])?)],
            ClassifierKind::TwoLayer => {
                let h = d.max(4);
                vec![
                    (init.var(&[h, d], (d as f64).powf(-0.5))?, init.zeros_var(&[h])?),
                    (init.var(&[3, h], (h as f64).powf(-0.5))?, init.zeros_var(&[3])?),
                ]
            }
        };
        Ok(Self {
            codes,
            classifier: AbstractionClassifier { layers },
        })
    }

    pub fn prompt_len(&self) -> usize {
        self.codes.dims()[1]
    }

    pub fn text_width(&self) -> usize {
        self.codes.dims()[2]
    }

    /// `(B, d)` features to `(B, 3)` abstraction distributions.
    pub fn predict(&self, features: &Tensor) -> Result<Tensor> {
        softmax_last(&self.classifier.logits(features)?)
    }

    /// `eta = A_l theta_l + A_m theta_m + A_h theta_h` for `(B, 3)`
    /// distributions, shaped `(B, n, d_t)`.
    pub fn abstraction_prompt(&self, dist: &Tensor) -> Result<Tensor> {
        let (n, w) = (self.prompt_len(), self.text_width());
        let b = dist.dim(0)?;
        let flat = self.codes.as_tensor().reshape((3, n * w))?;
        Ok(dist.matmul(&flat)?.reshape((b, n, w))?)
    }

    pub fn vars(&self) -> Vec<(String, Var)> {
        let mut out = vec![("codebook.codes".to_string(), self.codes.clone())];
        for (i, (w, b)) in self.classifier.layers.iter().enumerate() {
            out.push((format!("codebook.classifier.{i}.weight"), w.clone()));
            out.push((format!("codebook.classifier.{i}.bias"), b.clone()));
        }
        out
    }
}

/// `-(1/B) sum_b sum_i target[b,i] log max(dist[b,i], 1e-12)`.
///
/// Zero target weights contribute exactly zero, so `0 log 0 = 0`.
pub fn soft_cross_entropy(dist: &Tensor, target: &Tensor) -> Result<Tensor> {
    if dist.dims() != target.dims() {
        return Err(Error::shape("soft cross-entropy target", dist.dims(), target.dims()));
    }
    let b = dist.dim(0)?;
    if b == 0 {
        return Err(Error::InvalidInput("cross-entropy over an empty batch".into()));
    }
    let logp = dist.maximum(LOG_FLOOR)?.log()?;
    Ok(((target * logp)?.sum_all()? * (-1.0 / b as f64))?)
}

pub fn one_hot_labels(labels: &[Abstraction], device: &Device, dtype: DType) -> Result<Tensor> {
    let mut rows = vec![0.0f64; labels.len() * 3];
    for (i, l) in labels.iter().enumerate() {
        rows[i * 3 + l.index()] = 1.0;
    }
    Ok(Tensor::from_vec(rows, (labels.len(), 3), device)?.to_dtype(dtype)?)
}

/// Mean `-log A[label]` over the batch.
pub fn codebook_loss(dist: &Tensor, labels: &[Abstraction]) -> Result<Tensor> {
    let target = one_hot_labels(labels, dist.device(), dist.dtype())?;
    soft_cross_entropy(dist, &target)
}

/// Mean soft cross-entropy between mix coefficients `(B, 3)` and the
/// predicted distributions of the mixed features.
pub fn mixup_loss(dist: &Tensor, coeffs: &Tensor) -> Result<Tensor> {
    soft_cross_entropy(dist, coeffs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixCoefficients {
    pub lambda: [f64; 3],
    pub alpha: f64,
}

/// Draws `lambda ~ Dir(alpha, alpha, alpha)` by normalising three
/// `Gamma(alpha, 1)` draws.
pub fn sample_mix_coefficients<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<MixCoefficients> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("Dirichlet concentration must be positive, got {alpha}")));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::Config(e.to_string()))?;
    loop {
        let g: [f64; 3] = std::array::from_fn(|_| gamma.sample(rng));
        let total: f64 = g.iter().sum();
        // Tiny alphas can underflow all three draws.
        if total > 0.0 && total.is_finite() {
            return Ok(MixCoefficients {
                lambda: g.map(|x| x / total),
                alpha,
            });
        }
    }
}

/// `lambda_1 f_l + lambda_2 f_m + lambda_3 f_h` row-wise; features are
/// `(B, d)`, coefficients `(B, 3)`.
pub fn mixup_feature(f_l: &Tensor, f_m: &Tensor, f_h: &Tensor, coeffs: &Tensor) -> Result<Tensor> {
    let stacked = Tensor::stack(&[f_l, f_m, f_h], 1)?;
    let w = coeffs.unsqueeze(2)?;
    Ok(stacked.broadcast_mul(&w)?.sum(1)?)
}

pub fn coefficients_tensor(coeffs: &[MixCoefficients], device: &Device, dtype: DType) -> Result<Tensor> {
    let flat: Vec<f64> = coeffs.iter().flat_map(|c| c.lambda).collect();
    Ok(Tensor::from_vec(flat, (coeffs.len(), 3), device)?.to_dtype(dtype)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{scalar_f64, to_f64_vec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(rows: &[[f64; 3]]) -> Tensor {
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Tensor::from_vec(flat, (rows.len(), 3), &Device::Cpu).unwrap()
    }

    #[test]
    fn loss_examples() {
        let uniform = t(&[[1.0 / 3.0; 3]]);
        for l in Abstraction::ALL {
            let v = scalar_f64(&codebook_loss(&uniform, &[l]).unwrap()).unwrap();
            assert!((v - 3f64.ln()).abs() < 1e-12);
        }
        let d = t(&[[0.5, 0.25, 0.25]]);
        let v = scalar_f64(&codebook_loss(&d, &[Abstraction::Medium]).unwrap()).unwrap();
        assert!((v - 4f64.ln()).abs() < 1e-12);
        let v = scalar_f64(&mixup_loss(&d, &d).unwrap()).unwrap();
        assert!((v - 1.0397207708399179).abs() < 1e-9);
        let sure = t(&[[1.0, 0.0, 0.0]]);
        assert_eq!(scalar_f64(&codebook_loss(&sure, &[Abstraction::Low]).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn zero_alpha_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_mix_coefficients(0.0, &mut rng).is_err());
        assert!(sample_mix_coefficients(-1.0, &mut rng).is_err());
    }

    #[test]
    fn mix_coefficients_are_seeded() {
        let a = sample_mix_coefficients(0.5, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = sample_mix_coefficients(0.5, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert!((a.lambda.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn one_hot_prompt_selects_code() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut init = Init {
            rng: &mut rng,
            device: &Device::Cpu,
            dtype: DType::F64,
        };
        let cb = AbstractionCodebook::init(&mut init, 4, 2, 3, ClassifierKind::Linear).unwrap();
        let eta = cb.abstraction_prompt(&t(&[[0.0, 1.0, 0.0]])).unwrap();
        let code = cb.codes.as_tensor().get(1).unwrap();
        assert_eq!(to_f64_vec(&eta).unwrap(), to_f64_vec(&code).unwrap());
    }
}
