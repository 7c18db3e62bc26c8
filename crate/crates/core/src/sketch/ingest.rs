//! Newline-delimited JSON stroke datasets.
//!
//! Two record layouts are accepted:
//!
//! ```text
//! {"id": "opt", "category": "cat", "strokes": [[dx, ...], [dy, ...], [lifted, ...]]}   stroke3-delta
//! {"id": "opt", "category": "cat", "points": [[x, y, q1, q2, q3], ...]}               stroke5-absolute
//! ```
//!
//! In stroke-3 records `lifted = 1` marks the last point of a stroke.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::raster::{rasterize, RasterOptions};
use super::sample::{Abstraction, LabeledSample, Origin};
use super::vector::VectorSketch;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrokeFormat {
    Stroke3Delta,
    Stroke5Absolute,
}

impl FromStr for StrokeFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stroke3-delta" | "stroke3" => Ok(StrokeFormat::Stroke3Delta),
            "stroke5-absolute" | "stroke5" => Ok(StrokeFormat::Stroke5Absolute),
            other => Err(Error::InvalidInput(format!("unknown stroke format `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct IngestOptions {
    pub format: StrokeFormat,
    /// Abstraction level assigned to every record; must not be `Low`.
    pub abstraction: Abstraction,
    pub raster: RasterOptions,
    pub max_points: usize,
}

#[derive(Debug)]
pub struct RecordError {
    pub index: usize,
    pub error: Error,
}

/// Outcome of reading one source: accepted samples, malformed records, and
/// records rejected for naming a category outside the configured list.
#[derive(Debug, Default)]
pub struct IngestReport {
    pub samples: Vec<LabeledSample>,
    pub errors: Vec<RecordError>,
    pub unknown_categories: BTreeMap<String, usize>,
}

impl IngestReport {
    pub fn rejected(&self) -> usize {
        self.unknown_categories.values().sum()
    }
}

#[derive(Debug)]
pub struct ParsedRecord {
    pub id: Option<String>,
    pub category: String,
    pub vector: VectorSketch,
}

/// Parses one JSON record into a normalized vector sketch.
pub fn parse_record(
    line: &str,
    format: StrokeFormat,
    max_points: usize,
    index: usize,
) -> Result<ParsedRecord> {
    let malformed = |reason: String| Error::MalformedRecord { index, reason };
    let value: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let category = value
        .get("category")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("missing string field `category`".into()))?
        .to_string();
    let id = value.get("id").and_then(Value::as_str).map(str::to_string);

    let numbers = |v: &Value, what: &str| -> Result<Vec<f64>> {
        v.as_array()
            .ok_or_else(|| malformed(format!("`{what}` is not an array")))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| malformed(format!("non-numeric entry in `{what}`"))))
            .collect()
    };

    let relocate = |e: Error| match e {
        Error::MalformedRecord { reason, .. } => malformed(reason),
        other => other,
    };

    let vector = match format {
        StrokeFormat::Stroke3Delta => {
            let cols = value
                .get("strokes")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed("missing array field `strokes`".into()))?;
            if cols.len() != 3 {
                return Err(malformed(format!(
                    "`strokes` must hold 3 columns [dx, dy, pen], found {}",
                    cols.len()
                )));
            }
            let dx = numbers(&cols[0], "dx")?;
            let dy = numbers(&cols[1], "dy")?;
            let pen = numbers(&cols[2], "pen")?;
            if dx.len() != dy.len() || dx.len() != pen.len() {
                return Err(malformed("stroke columns differ in length".into()));
            }
            let deltas: Vec<_> = dx
                .iter()
                .zip(&dy)
                .zip(&pen)
                .map(|((&x, &y), &p)| (x, y, p != 0.0))
                .collect();
            VectorSketch::from_stroke3(&deltas, max_points).map_err(relocate)?
        }
        StrokeFormat::Stroke5Absolute => {
            let rows = value
                .get("points")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed("missing array field `points`".into()))?;
            let rows = rows
                .iter()
                .map(|r| {
                    let r = numbers(r, "points")?;
                    <[f64; 5]>::try_from(r.as_slice())
                        .map_err(|_| malformed("stroke-5 rows need 5 entries".into()))
                })
                .collect::<Result<Vec<_>>>()?;
            VectorSketch::from_stroke5_rows(&rows, max_points).map_err(relocate)?
        }
    };
    Ok(ParsedRecord {
        id,
        category,
        vector,
    })
}

/// Reads a newline-delimited JSON stroke file. Blank lines are skipped;
/// record indices count lines from zero.
pub fn ingest_stroke_file(
    path: &Path,
    categories: &[String],
    opts: &IngestOptions,
) -> Result<IngestReport> {
    if opts.abstraction == Abstraction::Low {
        return Err(Error::Config(
            "stroke datasets carry medium or high abstraction; low is reserved for edgemaps".into(),
        ));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let lookup: HashMap<&str, usize> = categories
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();

    enum Outcome {
        Sample(Box<LabeledSample>),
        Unknown(String),
        Failed(RecordError),
    }

    let outcomes: Vec<Outcome> = lines
        .par_iter()
        .map(|&(index, line)| {
            let parsed = match parse_record(line, opts.format, opts.max_points, index) {
                Ok(p) => p,
                Err(error) => return Outcome::Failed(RecordError { index, error }),
            };
            let Some(&category_index) = lookup.get(parsed.category.as_str()) else {
                return Outcome::Unknown(parsed.category);
            };
            let raster = match rasterize(&parsed.vector, &opts.raster) {
                Ok(r) => r,
                Err(error) => return Outcome::Failed(RecordError { index, error }),
            };
            let id = parsed.id.unwrap_or_else(|| {
                format!("{}/{stem}#{index}", opts.abstraction.source_tag().to_lowercase())
            });
            let origin = Origin {
                path: path.to_path_buf(),
                record: Some(index),
            };
            match LabeledSample::new(
                id,
                parsed.category,
                category_index,
                opts.abstraction,
                raster,
                Some(parsed.vector),
            ) {
                Ok(s) => Outcome::Sample(Box::new(s.with_origin(origin))),
                Err(error) => Outcome::Failed(RecordError { index, error }),
            }
        })
        .collect();

    let mut report = IngestReport::default();
    for outcome in outcomes {
        match outcome {
            Outcome::Sample(s) => report.samples.push(*s),
            Outcome::Unknown(c) => *report.unknown_categories.entry(c).or_default() += 1,
            Outcome::Failed(e) => report.errors.push(e),
        }
    }
    Ok(report)
}
