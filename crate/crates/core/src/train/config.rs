use serde::{Deserialize, Serialize};

use crate::codebook::{ClassifierKind, DEFAULT_MIX_ALPHA};
use crate::decoder::DEFAULT_HIDDEN;
use crate::error::{Error, Result};
use crate::sketch::DEFAULT_MAX_POINTS;

/// Hyper-parameters, loss weights and ablation switches for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub prompt_depth: usize,
    pub context_tokens: usize,
    /// Weight of the raster-to-vector loss.
    pub beta1: f64,
    /// Weight of the codebook classification loss.
    pub beta2: f64,
    /// Weight of the abstraction-mixup loss.
    pub beta3: f64,
    /// Dirichlet concentration for mixup coefficients.
    pub alpha: f64,
    pub seed: u64,
    pub meta_net: bool,
    pub layer_norm: bool,
    pub codebook: bool,
    pub mixup: bool,
    pub sketch2vec: bool,
    /// Build `eta` from the ground-truth abstraction label during training
    /// instead of the predicted distribution.
    pub teacher_forced_eta: bool,
    /// Detach features before mixing so the mixup loss only reaches the
    /// codebook classifier.
    pub mixup_stop_gradient: bool,
    /// Mixed triples per batch; 0 means one per batch sample.
    pub mixup_triples: usize,
    /// Evaluate unseen samples against seen and unseen names together.
    pub joint_label_space: bool,
    pub classifier: ClassifierKind,
    pub decoder_hidden: usize,
    /// Meta-Net hidden width; defaults to `max(d / 16, 4)`.
    pub meta_hidden: Option<usize>,
    pub max_decode_steps: usize,
    /// Phrase whose token embeddings seed the first text prompt slots.
    pub init_text: Option<String>,
    pub checkpoint_every: usize,
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 64,
            epochs: 7,
            prompt_depth: 9,
            context_tokens: 5,
            beta1: 1.0,
            beta2: 1.0,
            beta3: 1.0,
            alpha: DEFAULT_MIX_ALPHA,
            seed: 0,
            meta_net: true,
            layer_norm: true,
            codebook: true,
            mixup: true,
            sketch2vec: true,
            teacher_forced_eta: false,
            mixup_stop_gradient: false,
            mixup_triples: 0,
            joint_label_space: false,
            classifier: ClassifierKind::Linear,
            decoder_hidden: DEFAULT_HIDDEN,
            meta_hidden: None,
            max_decode_steps: DEFAULT_MAX_POINTS,
            init_text: None,
            checkpoint_every: 1,
            eval_batch_size: 64,
        }
    }
}

impl TrainConfig {
    /// Mixup needs the codebook classifier to score mixed features.
    pub fn mixup_active(&self) -> bool {
        self.mixup && self.codebook
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("alpha", self.alpha),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2), ("beta3", self.beta3)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        let counts = [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("prompt_depth", self.prompt_depth),
            ("context_tokens", self.context_tokens),
            ("decoder_hidden", self.decoder_hidden),
            ("max_decode_steps", self.max_decode_steps),
            ("checkpoint_every", self.checkpoint_every),
            ("eval_batch_size", self.eval_batch_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.meta_hidden == Some(0) {
            return Err(Error::Config("meta_hidden must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!((c.prompt_depth, c.context_tokens, c.epochs, c.batch_size), (9, 5, 7, 64));
        assert_eq!(c.learning_rate, 1e-4);
    }

    #[test]
    fn bad_values_rejected() {
        let c = TrainConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            prompt_depth: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            beta2: 0.0,
            ..Default::default()
        };
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epochs": 3, "warmup": 1}"#).is_err());
        let c: TrainConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.batch_size, 64);
    }
}
