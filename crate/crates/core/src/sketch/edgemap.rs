//! Edgemap image sets and zero-shot quality filtering.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use image::imageops::FilterType;

use super::ingest::IngestReport;
use super::raster::{PixelNorm, RasterSketch};
use super::sample::{Abstraction, LabeledSample, Origin};
use crate::error::{Error, Result};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Anything that can score an image against a list of category names with
/// a probability per category.
pub trait ZeroShotScorer {
    fn score(&self, raster: &RasterSketch, category_names: &[String]) -> Result<Vec<f64>>;
}

impl<F> ZeroShotScorer for F
where
    F: Fn(&RasterSketch, &[String]) -> Result<Vec<f64>>,
{
    fn score(&self, raster: &RasterSketch, category_names: &[String]) -> Result<Vec<f64>> {
        self(raster, category_names)
    }
}

/// Loads an image file, resizes it to `side` and normalizes it.
pub fn load_image_raster(path: &Path, side: usize, norm: &PixelNorm) -> Result<RasterSketch> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = img
        .resize_exact(side as u32, side as u32, FilterType::Triangle)
        .to_rgb8();
    let values: Vec<f32> = rgb.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
    RasterSketch::from_rgb(side, &values, norm)
}

/// Reads `root/<category>/<image>` trees. Directories whose name is not in
/// `categories` are counted as rejected; unreadable images become record
/// errors indexed by their position in the sorted file walk.
pub fn ingest_edgemap_dir(
    root: &Path,
    categories: &[String],
    side: usize,
    norm: &PixelNorm,
) -> Result<IngestReport> {
    let lookup: HashMap<&str, usize> = categories
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut dirs: Vec<_> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .collect();
    dirs.sort_by_key(|e| e.file_name());

    let mut report = IngestReport::default();
    let mut index = 0;
    for dir in dirs {
        let category = dir.file_name().to_string_lossy().into_owned();
        let mut files: Vec<_> = std::fs::read_dir(dir.path())
            .map_err(|e| Error::io(dir.path(), e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                p.extension()
                    .and_then(|x| x.to_str())
                    .is_some_and(|x| IMAGE_EXTENSIONS.contains(&x.to_ascii_lowercase().as_str()))
            })
            .collect();
        files.sort();
        let Some(&category_index) = lookup.get(category.as_str()) else {
            *report.unknown_categories.entry(category).or_default() += files.len();
            index += files.len();
            continue;
        };
        for path in files {
            let file = path.file_name().unwrap().to_string_lossy().into_owned();
            match load_image_raster(&path, side, norm) {
                Ok(raster) => {
                    let sample = LabeledSample::new(
                        format!("em/{category}/{file}"),
                        category.clone(),
                        category_index,
                        Abstraction::Low,
                        raster,
                        None,
                    )?
                    .with_origin(Origin { path, record: None });
                    report.samples.push(sample);
                }
                Err(error) => report.errors.push(super::ingest::RecordError { index, error }),
            }
            index += 1;
        }
    }
    Ok(report)
}

#[derive(Debug, Default)]
pub struct FilterOutcome {
    pub kept: Vec<LabeledSample>,
    /// Categories named in the request that had no images.
    pub dropped_categories: Vec<String>,
}

/// Keeps, per category, the top `keep_fraction` of images (rounded up) by the
/// scorer's probability for their own category. Ties go to the
/// lexicographically smaller sample id.
pub fn filter_edgemaps(
    images: Vec<LabeledSample>,
    category_names: &[String],
    scorer: &dyn ZeroShotScorer,
    keep_fraction: f64,
) -> Result<FilterOutcome> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "keep_fraction must lie in (0, 1], got {keep_fraction}"
        )));
    }
    let lookup: HashMap<&str, usize> = category_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    let mut buckets: BTreeMap<usize, Vec<(f64, LabeledSample)>> = BTreeMap::new();
    for image in images {
        let &k = lookup.get(image.category.as_str()).ok_or_else(|| {
            Error::InvalidInput(format!(
                "edgemap `{}` has category `{}` outside the scoring list",
                image.id, image.category
            ))
        })?;
        let probs = scorer.score(&image.raster, category_names)?;
        if probs.len() != category_names.len() {
            return Err(Error::shape("scorer output", category_names.len(), probs.len()));
        }
        buckets.entry(k).or_default().push((probs[k], image));
    }

    let mut outcome = FilterOutcome::default();
    for (k, name) in category_names.iter().enumerate() {
        let Some(mut bucket) = buckets.remove(&k) else {
            log::warn!("no edgemaps for category `{name}`; dropping it");
            outcome.dropped_categories.push(name.clone());
            continue;
        };
        bucket.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
        let keep = ((bucket.len() as f64 * keep_fraction).ceil() as usize).clamp(1, bucket.len());
        outcome
            .kept
            .extend(bucket.into_iter().take(keep).map(|(_, s)| s));
    }
    Ok(outcome)
}
