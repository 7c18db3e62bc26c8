use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{l2_normalize, softmax_last};

/// Temperature-scaled cosine similarity followed by a softmax over
/// categories.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHead {
    pub temperature: f64,
}

impl SimilarityHead {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self { temperature })
    }

    /// Class probabilities for one feature against `K` text features.
    pub fn classify(&self, image_feature: &[f64], text_features: &[Vec<f64>]) -> Result<Vec<f64>> {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let ni = norm(image_feature);
        if !(ni > 0.0) || image_feature.iter().any(|x| !x.is_finite()) {
            return Err(Error::ZeroNorm);
        }
        let mut logits = Vec::with_capacity(text_features.len());
        for t in text_features {
            if t.len() != image_feature.len() {
                return Err(Error::shape("text feature", image_feature.len(), t.len()));
            }
            let nt = norm(t);
            if !(nt > 0.0) || t.iter().any(|x| !x.is_finite()) {
                return Err(Error::ZeroNorm);
            }
            let dot: f64 = image_feature.iter().zip(t).map(|(a, b)| a * b).sum();
            logits.push(dot / (ni * nt) / self.temperature);
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        Ok(exp.into_iter().map(|e| e / total).collect())
    }

    /// Logits for image features `(B, d)` against text features `(K, d)` or
    /// per-instance text features `(B, K, d)`; returns `(B, K)`.
    pub fn logits(&self, image_features: &Tensor, text_features: &Tensor) -> Result<Tensor> {
        let img = l2_normalize(image_features)?;
        let txt = l2_normalize(text_features)?;
        let sims = match txt.rank() {
            2 => img.matmul(&txt.t()?)?,
            _ => txt.matmul(&img.unsqueeze(2)?)?.squeeze(2)?,
        };
        Ok((sims / self.temperature)?)
    }

    pub fn probabilities(&self, image_features: &Tensor, text_features: &Tensor) -> Result<Tensor> {
        softmax_last(&self.logits(image_features, text_features)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_has_probability_one() {
        let head = SimilarityHead::new(0.07).unwrap();
        assert_eq!(head.classify(&[1.0, 2.0], &[vec![3.0, -1.0]]).unwrap(), vec![1.0]);
    }

    #[test]
    fn orthogonal_feature_gives_uniform_distribution() {
        let head = SimilarityHead::new(0.07).unwrap();
        let t = vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]];
        let p = head.classify(&[0.0, 0.0, 0.0, 2.0], &t).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_norm_is_an_error() {
        let head = SimilarityHead::new(1.0).unwrap();
        assert!(matches!(head.classify(&[0.0, 0.0], &[vec![1.0, 0.0]]), Err(Error::ZeroNorm)));
        assert!(matches!(head.classify(&[1.0, 0.0], &[vec![0.0, 0.0]]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn nonpositive_temperature_rejected() {
        assert!(SimilarityHead::new(0.0).is_err());
        assert!(SimilarityHead::new(-1.0).is_err());
    }
}
