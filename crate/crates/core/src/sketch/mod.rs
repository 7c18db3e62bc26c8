//! Sketch data: vector and raster representations, dataset ingestion,
//! edgemap filtering, manifests, few-shot splits and synthetic corpora.

pub mod edgemap;
pub mod ingest;
pub mod manifest;
pub mod raster;
pub mod sample;
pub mod split;
pub mod synthetic;
pub mod vector;

pub use edgemap::{filter_edgemaps, ingest_edgemap_dir, load_image_raster, FilterOutcome, ZeroShotScorer};
pub use ingest::{ingest_stroke_file, IngestOptions, IngestReport, StrokeFormat};
pub use manifest::{Manifest, ManifestEntry};
pub use raster::{rasterize, render_ink, render_raster, InkCanvas, PixelNorm, RasterOptions, RasterSketch};
pub use sample::{Abstraction, LabeledSample, Origin};
pub use split::{build_split, DatasetSplit};
pub use vector::{PenState, StrokePoint, VectorSketch, DEFAULT_MAX_POINTS};
