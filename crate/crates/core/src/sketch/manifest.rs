//! Dataset manifest: one JSON file listing every prepared sample with the
//! file it came from, so later stages can reload exactly the same data.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::edgemap::load_image_raster;
use super::ingest::{ingest_stroke_file, IngestOptions, StrokeFormat};
use super::raster::RasterOptions;
use super::sample::{Abstraction, LabeledSample, Origin};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub category: String,
    pub abstraction: Abstraction,
    pub path: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub record: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub format: Option<StrokeFormat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub categories: Vec<String>,
    pub raster: RasterOptions,
    pub max_points: usize,
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    /// Describes file-backed samples. `formats` maps each stroke file to the
    /// layout it was read with.
    pub fn from_samples(
        samples: &[LabeledSample],
        categories: &[String],
        raster: RasterOptions,
        max_points: usize,
        formats: &HashMap<PathBuf, StrokeFormat>,
    ) -> Result<Self> {
        let entries = samples
            .iter()
            .map(|s| {
                let origin = s.origin.as_ref().ok_or_else(|| {
                    Error::InvalidInput(format!("sample `{}` has no file origin", s.id))
                })?;
                Ok(ManifestEntry {
                    id: s.id.clone(),
                    category: s.category.clone(),
                    abstraction: s.abstraction,
                    path: origin.path.clone(),
                    record: origin.record,
                    format: origin.record.and_then(|_| formats.get(&origin.path).copied()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            version: MANIFEST_VERSION,
            categories: categories.to_vec(),
            raster,
            max_points,
            samples: entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::InvalidInput(format!(
                "manifest version {} unsupported (expected {MANIFEST_VERSION})",
                manifest.version
            )));
        }
        Ok(manifest)
    }

    pub fn count_by_source(&self) -> BTreeMap<Abstraction, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.samples {
            *counts.entry(e.abstraction).or_default() += 1;
        }
        counts
    }

    /// Re-reads every listed sample from disk, in manifest order.
    pub fn materialize(&self) -> Result<Vec<LabeledSample>> {
        let mut by_file: BTreeMap<&Path, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.samples.iter().enumerate() {
            by_file.entry(e.path.as_path()).or_default().push(i);
        }
        let mut out: Vec<Option<LabeledSample>> = vec![None; self.samples.len()];
        for (path, indices) in by_file {
            let first = &self.samples[indices[0]];
            if let Some(format) = first.format {
                let opts = IngestOptions {
                    format,
                    abstraction: first.abstraction,
                    raster: self.raster,
                    max_points: self.max_points,
                };
                let report = ingest_stroke_file(path, &self.categories, &opts)?;
                let mut by_record: HashMap<usize, LabeledSample> = report
                    .samples
                    .into_iter()
                    .filter_map(|s| s.origin.as_ref().and_then(|o| o.record).map(|r| (r, s)))
                    .collect();
                for i in indices {
                    let e = &self.samples[i];
                    let mut s = e.record.and_then(|r| by_record.remove(&r)).ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "manifest entry `{}` not found in {}",
                            e.id,
                            path.display()
                        ))
                    })?;
                    s.id = e.id.clone();
                    out[i] = Some(s);
                }
            } else {
                for i in indices {
                    let e = &self.samples[i];
                    let k = self.category_index(&e.category)?;
                    let raster = load_image_raster(path, self.raster.side, &self.raster.norm)?;
                    let s = LabeledSample::new(
                        e.id.clone(),
                        e.category.clone(),
                        k,
                        e.abstraction,
                        raster,
                        None,
                    )?
                    .with_origin(Origin {
                        path: path.to_path_buf(),
                        record: None,
                    });
                    out[i] = Some(s);
                }
            }
        }
        Ok(out.into_iter().map(|s| s.expect("every entry filled")).collect())
    }

    fn category_index(&self, name: &str) -> Result<usize> {
        self.categories
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::InvalidInput(format!("category `{name}` not in manifest")))
    }
}
