//! Paired-seed ablation on the synthetic overlap benchmark.
//!
//! Training uses the three overlapping sources; evaluation uses held-out
//! drawings of the same categories whose abstraction scores cover the whole
//! continuum, a source the model never saw.

use serde::Serialize;

use crate::backbone::toy::toy_backbone;
use crate::error::Result;
use crate::sketch::synthetic::{generate, generate_continuum, SyntheticConfig};
use crate::sketch::{PixelNorm, RasterOptions};

use super::{evaluate, train, Model, TrainConfig};

#[derive(Clone, Debug)]
pub struct OverlapBenchmark {
    pub categories: Vec<String>,
    pub shots: usize,
    pub heldout_per_category: usize,
    /// Shared by both arms; only the codebook switch differs.
    pub config: TrainConfig,
}

impl Default for OverlapBenchmark {
    fn default() -> Self {
        Self {
            categories: ["circle", "square", "triangle", "diamond"].map(String::from).to_vec(),
            shots: 10,
            heldout_per_category: 30,
            config: TrainConfig {
                learning_rate: 1e-2,
                batch_size: 40,
                epochs: 200,
                prompt_depth: 2,
                decoder_hidden: 16,
                max_decode_steps: 24,
                checkpoint_every: usize::MAX,
                ..Default::default()
            },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PairedRun {
    pub seed: u64,
    /// Held-out top-1 with codebook and mixup.
    pub with_mixup: f64,
    /// Held-out top-1 with both disabled.
    pub without: f64,
}

impl PairedRun {
    pub fn delta(&self) -> f64 {
        self.with_mixup - self.without
    }
}

impl OverlapBenchmark {
    /// Held-out accuracy for one seed and arm. The seed drives the corpus,
    /// the held-out set and the model initialization alike.
    pub fn run(&self, seed: u64, codebook_mixup: bool) -> Result<f64> {
        let names: Vec<&str> = self.categories.iter().map(String::as_str).collect();
        let raster = RasterOptions::new(16, 1.0, PixelNorm::SYMMETRIC);
        let data = SyntheticConfig::new(&names, self.shots, seed, raster).overlapping();
        let train_set = generate(&data)?;
        let heldout = generate_continuum(&data, self.heldout_per_category)?;
        let config = TrainConfig {
            seed,
            codebook: codebook_mixup,
            mixup: codebook_mixup,
            ..self.config.clone()
        };
        let model = Model::new(toy_backbone(0)?, config)?;
        let refs: Vec<_> = train_set.iter().collect();
        train(&model, &refs, &self.categories, None)?;
        let heldout: Vec<_> = heldout.iter().collect();
        Ok(evaluate(&model, &heldout, &self.categories)?.top1)
    }

    pub fn paired(&self, seed: u64) -> Result<PairedRun> {
        Ok(PairedRun {
            seed,
            with_mixup: self.run(seed, true)?,
            without: self.run(seed, false)?,
        })
    }
}
