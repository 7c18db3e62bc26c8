//! Few-shot, open-set sketch classification by prompt learning on a frozen
//! vision-language backbone.
//!
//! Learnable deep prompts condition both encoders. A Meta-Net and an
//! abstraction codebook shift the text prompts per sketch: the codebook
//! predicts how abstract a sketch is (edgemap, medium, doodle) and mixes
//! three learned prompt vectors accordingly. Dirichlet mixup over the three
//! abstraction sources trains that predictor on the continuum between them,
//! and an auxiliary GRU decoder reconstructs stroke sequences from image
//! features.
//!
//! - [`sketch`]: stroke and raster data, ingestion, edgemap filtering, splits
//! - [`backbone`]: frozen CLIP-style encoders with prompt injection
//! - [`prompt`], [`codebook`], [`decoder`]: the learnable modules
//! - [`train`]: loss assembly, training, checkpoints, evaluation
//! - [`cli`]: the `sketchclip` command line

pub mod backbone;
pub mod cli;
pub mod codebook;
pub mod decoder;
pub mod error;
pub mod nn;
pub mod prompt;
pub mod sketch;
pub mod train;

pub use error::{Error, Result};
