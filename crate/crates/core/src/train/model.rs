use candle_core::{Tensor, Var, D};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbone::{Backbone, CategoryTokens, Tower};
use crate::codebook::{
    codebook_loss, coefficients_tensor, mixup_feature, mixup_loss, one_hot_labels, sample_mix_coefficients,
    AbstractionCodebook,
};
use crate::decoder::{sketch2vec_loss, PaddedTargets, Sketch2VecDecoder};
use crate::error::{Error, Result};
use crate::nn::{log_softmax_last, scalar_f64, Init};
use crate::prompt::{PromptShape, PromptState};
use crate::sketch::{Abstraction, LabeledSample};

use super::TrainConfig;

/// Prompt-tuned classifier around a frozen backbone.
#[derive(Clone, Debug)]
pub struct Model {
    pub backbone: Backbone,
    pub config: TrainConfig,
    pub prompts: PromptState,
    pub codebook: Option<AbstractionCodebook>,
    pub decoder: Option<Sketch2VecDecoder>,
    /// Layer-norm values as loaded, for reporting tuned deltas.
    pub pretrained_layer_norms: Vec<(String, Vec<f64>)>,
}

impl Model {
    pub fn new(mut backbone: Backbone, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        backbone.fork_layer_norms()?;
        let d = backbone.vision.config.output_dim;
        let shape = PromptShape {
            depth: config.prompt_depth,
            prompt_len: config.context_tokens,
            vision_width: backbone.vision.config.width,
            text_width: backbone.text.config.width,
            feature_dim: d,
            meta_hidden: config.meta_hidden.unwrap_or_else(|| PromptShape::default_meta_hidden(d)),
        };
        for (tower, layers) in [
            ("vision", backbone.vision.config.layers),
            ("text", backbone.text.config.layers),
        ] {
            if shape.depth > layers {
                return Err(Error::Config(format!(
                    "prompt depth {} exceeds the {layers} {tower} layers of adapter `{}`",
                    shape.depth, backbone.adapter
                )));
            }
        }
        let phrase = match &config.init_text {
            Some(text) => {
                let ids = backbone.text.tokenizer.encode(text);
                let idx = Tensor::new(ids.as_slice(), &backbone.device)?;
                Some(backbone.text.token_embedding.index_select(&idx, 0)?)
            }
            None => None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let prompts = PromptState::init(rng.next_u64(), shape, phrase.as_ref(), &backbone.device, backbone.dtype)?;
        let mut init = Init {
            rng: &mut rng,
            device: &backbone.device,
            dtype: backbone.dtype,
        };
        let codebook = config
            .codebook
            .then(|| {
                AbstractionCodebook::init(&mut init, d, shape.prompt_len, shape.text_width, config.classifier)
            })
            .transpose()?;
        let decoder = config
            .sketch2vec
            .then(|| Sketch2VecDecoder::init(&mut init, d, config.decoder_hidden))
            .transpose()?;
        let pretrained_layer_norms = backbone.layer_norm_snapshot()?;
        Ok(Self {
            backbone,
            config,
            prompts,
            codebook,
            decoder,
            pretrained_layer_norms,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.backbone.vision.config.output_dim
    }

    /// Exactly the parameters the optimizer may update under the active
    /// switches.
    pub fn trainable_vars(&self) -> Vec<(String, Var)> {
        let mut out = self.prompts.prompt_vars();
        if self.config.meta_net {
            out.extend(self.prompts.meta_vars());
        }
        if let Some(cb) = &self.codebook {
            out.extend(cb.vars());
        }
        if let Some(dec) = &self.decoder {
            out.extend(dec.vars());
        }
        if self.config.layer_norm {
            out.extend(self.backbone.layer_norm_vars(Tower::Vision));
            out.extend(self.backbone.layer_norm_vars(Tower::Text));
        }
        out
    }

    /// Every learnable parameter, trainable under the current switches or
    /// not.
    pub fn all_vars(&self) -> Vec<(String, Var)> {
        let mut out = self.prompts.prompt_vars();
        out.extend(self.prompts.meta_vars());
        if let Some(cb) = &self.codebook {
            out.extend(cb.vars());
        }
        if let Some(dec) = &self.decoder {
            out.extend(dec.vars());
        }
        out.extend(self.backbone.layer_norm_vars(Tower::Vision));
        out.extend(self.backbone.layer_norm_vars(Tower::Text));
        out
    }

    pub fn tokenize(&self, names: &[String]) -> Result<CategoryTokens> {
        self.backbone.tokenize(names, self.config.context_tokens)
    }

    pub fn image_batch(&self, samples: &[&LabeledSample]) -> Result<Tensor> {
        let rasters: Vec<_> = samples.iter().map(|s| &s.raster).collect();
        self.backbone.image_batch(&rasters)
    }

    /// Sketch features `(B, d)` from the prompted image encoder.
    pub fn image_features(&self, pixels: &Tensor) -> Result<Tensor> {
        self.backbone
            .encode_images(pixels, Some(self.prompts.vision.as_tensor()))
    }

    /// Predicted abstraction distributions `(B, 3)`, when the codebook is on.
    pub fn abstraction(&self, features: &Tensor) -> Result<Option<Tensor>> {
        self.codebook.as_ref().map(|cb| cb.predict(features)).transpose()
    }

    /// Shifted text prompt stack `(B, J, n, d_t)` for each sketch.
    pub fn text_prompts(&self, features: &Tensor, eta_weights: Option<&Tensor>) -> Result<Tensor> {
        let b = features.dim(0)?;
        let (n, w) = (self.prompts.shape.prompt_len, self.prompts.shape.text_width);
        let zeros = || Tensor::zeros((b, n, w), self.backbone.dtype, &self.backbone.device);
        let pi = if self.config.meta_net {
            self.prompts.meta_context(features)?
        } else {
            zeros()?
        };
        let eta = match (&self.codebook, eta_weights) {
            (Some(cb), Some(wts)) => cb.abstraction_prompt(wts)?,
            _ => zeros()?,
        };
        self.prompts.compose_text(&pi, &eta)
    }

    /// Instance-conditional text features `(B, K, d)`.
    pub fn text_features(
        &self,
        features: &Tensor,
        eta_weights: Option<&Tensor>,
        tokens: &CategoryTokens,
    ) -> Result<Tensor> {
        let prompts = self.text_prompts(features, eta_weights)?;
        self.backbone.encode_text(tokens, Some(&prompts))
    }

    /// Category logits `(B, K)` and abstraction distributions for a pixel
    /// batch, following the inference path.
    pub fn classify(&self, pixels: &Tensor, tokens: &CategoryTokens) -> Result<(Tensor, Option<Tensor>)> {
        let f = self.image_features(pixels)?;
        let dist = self.abstraction(&f)?;
        let text = self.text_features(&f, dist.as_ref(), tokens)?;
        Ok((self.backbone.similarity.logits(&f, &text)?, dist))
    }
}

/// Mean `-log softmax(logits)[label]` over the batch.
pub fn cross_entropy_logits(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (b, k) = logits.dims2()?;
    if b != labels.len() {
        return Err(Error::shape("class labels", b, labels.len()));
    }
    if b == 0 {
        return Err(Error::InvalidInput("cross-entropy over an empty batch".into()));
    }
    let mut hot = vec![0.0f64; b * k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::InvalidInput(format!("label {l} outside {k} categories")));
        }
        hot[i * k + l] = 1.0;
    }
    let hot = Tensor::from_vec(hot, (b, k), logits.device())?.to_dtype(logits.dtype())?;
    Ok(((hot * log_softmax_last(logits)?)?.sum_all()? * (-1.0 / b as f64))?)
}

/// Loss values of one batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub ce: f64,
    pub sketch2vec: f64,
    pub codebook: f64,
    pub mixup: f64,
    /// Mixup was on but the batch lacked one of the three sources.
    pub mixup_skipped: bool,
}

impl LossBreakdown {
    pub fn terms(&self) -> [(&'static str, f64); 5] {
        [
            ("total", self.total),
            ("ce", self.ce),
            ("sketch2vec", self.sketch2vec),
            ("codebook", self.codebook),
            ("mixup", self.mixup),
        ]
    }
}

/// `L_CE + beta1 L_S2V + beta2 L_CB + beta3 L_mix` for one batch; disabled
/// terms are omitted. `rng` drives mixup triples and coefficients.
pub fn total_loss<R: Rng>(
    model: &Model,
    batch: &[&LabeledSample],
    labels: &[usize],
    tokens: &CategoryTokens,
    rng: &mut R,
) -> Result<(Tensor, LossBreakdown)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty training batch".into()));
    }
    let cfg = &model.config;
    let levels: Vec<Abstraction> = batch.iter().map(|s| s.abstraction).collect();
    let pixels = model.image_batch(batch)?;
    let f = model.image_features(&pixels)?;
    let dist = model.abstraction(&f)?;
    let eta_weights = match (&dist, cfg.teacher_forced_eta) {
        (Some(_), true) => Some(one_hot_labels(&levels, f.device(), f.dtype())?),
        (d, _) => d.clone(),
    };
    let text = model.text_features(&f, eta_weights.as_ref(), tokens)?;
    let logits = model.backbone.similarity.logits(&f, &text)?;
    let ce = cross_entropy_logits(&logits, labels)?;
    let mut breakdown = LossBreakdown {
        ce: scalar_f64(&ce)?,
        ..Default::default()
    };
    let mut total = ce;

    if let Some(dec) = &model.decoder {
        let vectors: Vec<_> = batch.iter().map(|s| s.vector.as_ref()).collect();
        let longest = vectors.iter().flatten().map(|v| v.len()).max().unwrap_or(0);
        let steps = longest.min(cfg.max_decode_steps).max(1);
        let targets = PaddedTargets::new(&vectors, steps, f.device(), f.dtype())?;
        let loss = if targets.active > 0 {
            let pred = dec.decode(&f, steps, Some(&targets.points))?;
            sketch2vec_loss(&pred, &targets)?
        } else {
            Tensor::zeros((), f.dtype(), f.device())?
        };
        breakdown.sketch2vec = scalar_f64(&loss)?;
        total = (total + (loss * cfg.beta1)?)?;
    }

    if let (Some(cb), Some(dist)) = (&model.codebook, &dist) {
        let loss = codebook_loss(dist, &levels)?;
        breakdown.codebook = scalar_f64(&loss)?;
        total = (total + (loss * cfg.beta2)?)?;

        if cfg.mixup_active() {
            let groups: Vec<Vec<u32>> = Abstraction::ALL
                .iter()
                .map(|a| (0..batch.len() as u32).filter(|&i| levels[i as usize] == *a).collect())
                .collect();
            if groups.iter().any(|g| g.is_empty()) {
                breakdown.mixup_skipped = true;
            } else {
                let triples = if cfg.mixup_triples == 0 { batch.len() } else { cfg.mixup_triples };
                let mut picks: [Vec<u32>; 3] = Default::default();
                let mut coeffs = Vec::with_capacity(triples);
                for _ in 0..triples {
                    for (pick, group) in picks.iter_mut().zip(&groups) {
                        pick.push(group[rng.random_range(0..group.len())]);
                    }
                    coeffs.push(sample_mix_coefficients(cfg.alpha, rng)?);
                }
                let source = if cfg.mixup_stop_gradient { f.detach() } else { f.clone() };
                let gather = |idx: &Vec<u32>| -> Result<Tensor> {
                    let idx = Tensor::new(idx.as_slice(), f.device())?;
                    Ok(source.index_select(&idx, 0)?)
                };
                let lambda = coefficients_tensor(&coeffs, f.device(), f.dtype())?;
                let mixed = mixup_feature(&gather(&picks[0])?, &gather(&picks[1])?, &gather(&picks[2])?, &lambda)?;
                let loss = mixup_loss(&cb.predict(&mixed)?, &lambda)?;
                breakdown.mixup = scalar_f64(&loss)?;
                total = (total + (loss * cfg.beta3)?)?;
            }
        }
    }
    breakdown.total = scalar_f64(&total)?;
    Ok((total, breakdown))
}

/// Top-1 hits of `(B, K)` logits against labels.
pub fn count_correct(logits: &Tensor, labels: &[usize]) -> Result<usize> {
    let pred = logits.argmax(D::Minus1)?.to_vec1::<u32>()?;
    Ok(pred.iter().zip(labels).filter(|(p, l)| **p as usize == **l).count())
}
