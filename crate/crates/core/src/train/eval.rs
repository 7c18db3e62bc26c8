use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softmax_last, to_f64_vec};
use crate::sketch::{Abstraction, DatasetSplit, LabeledSample, RasterSketch};

use super::plot::{bar_chart_svg, BarChart};
use super::Model;

pub const MEMBERSHIP_BINS: usize = 10;
pub const ABSTRACTION_SCORE_BINS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Seen,
    Unseen,
}

impl fmt::Display for Which {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Which::Seen => "seen",
            Which::Unseen => "unseen",
        })
    }
}

impl FromStr for Which {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seen" => Ok(Which::Seen),
            "unseen" => Ok(Which::Unseen),
            other => Err(Error::InvalidInput(format!("expected `seen` or `unseen`, got `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

impl Tally {
    fn add(&mut self, hit: bool) {
        self.count += 1;
        self.correct += hit as usize;
        self.accuracy = 100.0 * self.correct as f64 / self.count as f64;
    }
}

/// Result for one evaluated sketch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub id: String,
    pub category: String,
    pub predicted: String,
    pub confidence: f64,
    pub abstraction: Abstraction,
    /// `(A_l, A_m, A_h)`, absent without a codebook.
    pub distribution: Option<[f64; 3]>,
}

impl SamplePrediction {
    pub fn correct(&self) -> bool {
        self.predicted == self.category
    }

    /// Predicted probability of the sample's own abstraction level.
    pub fn membership(&self) -> Option<f64> {
        self.distribution.map(|d| d[self.abstraction.index()])
    }

    /// Expected abstraction on `[0, 1]`: low 0, medium 0.5, high 1.
    pub fn abstraction_score(&self) -> Option<f64> {
        self.distribution.map(|d| 0.5 * d[1] + d[2])
    }

    pub fn predicted_abstraction(&self) -> Option<Abstraction> {
        self.distribution.map(|d| {
            let best = (0..3).fold(0, |b, i| if d[i] > d[b] { i } else { b });
            Abstraction::from_index(best).expect("three levels")
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Top-1 accuracy of the samples in the bin, when defined.
    pub accuracy: Option<f64>,
}

fn histogram(values: impl Iterator<Item = (f64, bool)>, bins: usize) -> Vec<HistogramBin> {
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lower: i as f64 / bins as f64,
            upper: (i + 1) as f64 / bins as f64,
            count: 0,
            accuracy: None,
        })
        .collect();
    let mut hits = vec![0usize; bins];
    for (v, hit) in values {
        let i = ((v * bins as f64) as usize).min(bins - 1);
        out[i].count += 1;
        hits[i] += hit as usize;
    }
    for (bin, h) in out.iter_mut().zip(hits) {
        if bin.count > 0 {
            bin.accuracy = Some(100.0 * h as f64 / bin.count as f64);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub which: Option<Which>,
    pub label_space: Vec<String>,
    pub samples: usize,
    pub top1: f64,
    pub top1_seen: Option<f64>,
    pub top1_unseen: Option<f64>,
    pub abstraction_accuracy: Option<f64>,
    pub per_source: BTreeMap<String, Tally>,
    pub per_category: BTreeMap<String, Tally>,
    /// Own-level membership `A[label]` over `[0, 1]`.
    pub membership_histogram: Vec<HistogramBin>,
    /// Top-1 accuracy against the expected predicted abstraction.
    pub accuracy_by_abstraction: Vec<HistogramBin>,
    pub predictions: Vec<SamplePrediction>,
}

/// Class probabilities `(B, K)` and abstraction distributions for a batch of
/// rasters.
pub fn predict_rasters(
    model: &Model,
    rasters: &[&RasterSketch],
    tokens: &crate::backbone::CategoryTokens,
) -> Result<(Vec<Vec<f64>>, Option<Vec<[f64; 3]>>)> {
    let pixels = model.backbone.image_batch(rasters)?;
    let (logits, dist) = model.classify(&pixels, tokens)?;
    let k = tokens.len();
    let probs = to_f64_vec(&softmax_last(&logits.detach())?)?;
    let probs = probs.chunks(k).map(|c| c.to_vec()).collect();
    let dist = dist
        .map(|d| -> Result<Vec<[f64; 3]>> {
            Ok(to_f64_vec(&d.detach())?.chunks(3).map(|c| [c[0], c[1], c[2]]).collect())
        })
        .transpose()?;
    Ok((probs, dist))
}

/// Runs the inference pipeline on every sample against `label_space`.
///
/// Samples are processed in id order in fixed-size batches, so the report
/// does not depend on the order they are passed in.
pub fn evaluate(model: &Model, samples: &[&LabeledSample], label_space: &[String]) -> Result<EvalReport> {
    if label_space.is_empty() {
        return Err(Error::InvalidInput("empty label space".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let tokens = model.tokenize(label_space)?;
    let mut predictions = Vec::with_capacity(sorted.len());
    for chunk in sorted.chunks(model.config.eval_batch_size) {
        let rasters: Vec<_> = chunk.iter().map(|s| &s.raster).collect();
        let (probs, dists) = predict_rasters(model, &rasters, &tokens)?;
        for (i, s) in chunk.iter().enumerate() {
            let p = &probs[i];
            let best = (0..p.len()).fold(0, |b, j| if p[j] > p[b] { j } else { b });
            predictions.push(SamplePrediction {
                id: s.id.clone(),
                category: s.category.clone(),
                predicted: label_space[best].clone(),
                confidence: p[best],
                abstraction: s.abstraction,
                distribution: dists.as_ref().map(|d| d[i]),
            });
        }
    }
    Ok(summarize(predictions, label_space))
}

fn summarize(predictions: Vec<SamplePrediction>, label_space: &[String]) -> EvalReport {
    let mut overall = Tally::default();
    let mut per_source: BTreeMap<String, Tally> = BTreeMap::new();
    let mut per_category: BTreeMap<String, Tally> = BTreeMap::new();
    let mut abstraction = Tally::default();
    for p in &predictions {
        let hit = p.correct();
        overall.add(hit);
        per_source.entry(p.abstraction.source_tag().to_string()).or_default().add(hit);
        per_category.entry(p.category.clone()).or_default().add(hit);
        if let Some(level) = p.predicted_abstraction() {
            abstraction.add(level == p.abstraction);
        }
    }
    let has_dist = predictions.iter().any(|p| p.distribution.is_some());
    let membership_histogram = histogram(
        predictions.iter().filter_map(|p| p.membership().map(|m| (m, p.correct()))),
        MEMBERSHIP_BINS,
    );
    let accuracy_by_abstraction = histogram(
        predictions
            .iter()
            .filter_map(|p| p.abstraction_score().map(|s| (s, p.correct()))),
        ABSTRACTION_SCORE_BINS,
    );
    EvalReport {
        which: None,
        label_space: label_space.to_vec(),
        samples: predictions.len(),
        top1: if overall.count > 0 { overall.accuracy } else { 0.0 },
        top1_seen: None,
        top1_unseen: None,
        abstraction_accuracy: has_dist.then_some(abstraction.accuracy),
        per_source,
        per_category,
        membership_histogram,
        accuracy_by_abstraction,
        predictions,
    }
}

/// Resolves split ids against a sample pool.
pub fn select<'a>(pool: &'a [LabeledSample], ids: &[String]) -> Result<Vec<&'a LabeledSample>> {
    let index: HashMap<&str, &LabeledSample> = pool.iter().map(|s| (s.id.as_str(), s)).collect();
    ids.iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("split references unknown sample `{id}`")))
        })
        .collect()
}

/// Evaluates the seen or unseen half of a split. Unseen samples are scored
/// against the unseen names only, or against seen and unseen names when the
/// model's config asks for the joint label space.
pub fn evaluate_split(model: &Model, pool: &[LabeledSample], split: &DatasetSplit, which: Which) -> Result<EvalReport> {
    let (ids, names) = match which {
        Which::Seen => (&split.eval_seen_samples, split.seen_categories.clone()),
        Which::Unseen => {
            if split.unseen_categories.is_empty() {
                return Err(Error::InvalidInput("split has no unseen categories".into()));
            }
            let mut names = Vec::new();
            if model.config.joint_label_space {
                names.extend(split.seen_categories.iter().cloned());
            }
            names.extend(split.unseen_categories.iter().cloned());
            (&split.eval_unseen_samples, names)
        }
    };
    if ids.is_empty() {
        return Err(Error::InvalidInput(format!("split has no {which} evaluation samples")));
    }
    let samples = select(pool, ids)?;
    let mut report = evaluate(model, &samples, &names)?;
    report.which = Some(which);
    match which {
        Which::Seen => report.top1_seen = Some(report.top1),
        Which::Unseen => report.top1_unseen = Some(report.top1),
    }
    Ok(report)
}

pub const REPORT_JSON: &str = "eval_report.json";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const PER_CATEGORY_CSV: &str = "per_category.csv";
pub const PER_SOURCE_CSV: &str = "per_source.csv";
pub const ACCURACY_PLOT: &str = "accuracy_vs_abstraction.svg";
pub const MEMBERSHIP_PLOT: &str = "membership_histogram.svg";

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e))
}

fn write_tallies(path: &Path, key: &str, rows: &BTreeMap<String, Tally>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record([key, "count", "correct", "accuracy"]).map_err(csv_err(path))?;
    for (k, t) in rows {
        w.write_record([k.clone(), t.count.to_string(), t.correct.to_string(), t.accuracy.to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl EvalReport {
    /// Writes the JSON report, CSV tables and both SVG plots into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join(REPORT_JSON);
        std::fs::write(&p, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(&p, e))?;

        let p = dir.join(PREDICTIONS_CSV);
        let mut w = csv::Writer::from_path(&p).map_err(csv_err(&p))?;
        w.write_record(["sample_id", "category", "predicted", "confidence", "a_l", "a_m", "a_h", "label"])
            .map_err(csv_err(&p))?;
        for s in &self.predictions {
            let d = s.distribution.map(|d| d.map(|x| x.to_string()));
            let [a_l, a_m, a_h] = d.unwrap_or_default();
            w.write_record([
                s.id.clone(),
                s.category.clone(),
                s.predicted.clone(),
                s.confidence.to_string(),
                a_l,
                a_m,
                a_h,
                s.abstraction.to_string(),
            ])
            .map_err(csv_err(&p))?;
        }
        w.flush().map_err(|e| Error::io(&p, e))?;

        write_tallies(&dir.join(PER_CATEGORY_CSV), "category", &self.per_category)?;
        write_tallies(&dir.join(PER_SOURCE_CSV), "source", &self.per_source)?;

        let label = |b: &HistogramBin| format!("{:.1}-{:.1}", b.lower, b.upper);
        let acc = BarChart {
            title: "Top-1 accuracy by predicted abstraction".into(),
            x_label: "expected abstraction (0 low, 1 high)".into(),
            y_label: "accuracy (%)".into(),
            labels: self.accuracy_by_abstraction.iter().map(label).collect(),
            values: self
                .accuracy_by_abstraction
                .iter()
                .map(|b| b.accuracy.unwrap_or(0.0))
                .collect(),
            y_max: Some(100.0),
        };
        let hist = BarChart {
            title: "Own-level abstraction membership".into(),
            x_label: "membership".into(),
            y_label: "samples".into(),
            labels: self.membership_histogram.iter().map(label).collect(),
            values: self.membership_histogram.iter().map(|b| b.count as f64).collect(),
            y_max: None,
        };
        for (name, chart) in [(ACCURACY_PLOT, acc), (MEMBERSHIP_PLOT, hist)] {
            let p = dir.join(name);
            std::fs::write(&p, bar_chart_svg(&chart)).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Single-sketch prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub top: Vec<RankedCategory>,
    pub abstraction: Option<[f64; 3]>,
    pub decoded: Option<Vec<[f64; 5]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCategory {
    pub category: String,
    pub probability: f64,
}

/// Ranks `names` for one raster; optionally decodes a stroke-5 sequence,
/// cut after the first end-of-sketch point.
pub fn predict(model: &Model, raster: &RasterSketch, names: &[String], top_k: usize, decode: bool) -> Result<Prediction> {
    if names.is_empty() {
        return Err(Error::InvalidInput("no category names given".into()));
    }
    let tokens = model.tokenize(names)?;
    let (probs, dist) = predict_rasters(model, &[raster], &tokens)?;
    let mut ranked: Vec<_> = names
        .iter()
        .zip(&probs[0])
        .map(|(n, &p)| RankedCategory {
            category: n.clone(),
            probability: p,
        })
        .collect();
    ranked.sort_by(|a, b| b.probability.total_cmp(&a.probability).then(a.category.cmp(&b.category)));
    ranked.truncate(top_k.max(1));
    let decoded = match (&model.decoder, decode) {
        (Some(dec), true) => {
            let pixels = model.backbone.image_batch(&[raster])?;
            let f = model.image_features(&pixels)?;
            let seq = dec.decode(&f, model.config.max_decode_steps, None)?;
            let rows: Vec<[f64; 5]> = to_f64_vec(&seq.detach())?
                .chunks(5)
                .map(|c| [c[0], c[1], c[2], c[3], c[4]])
                .collect();
            let end = rows
                .iter()
                .position(|r| r[4] > r[2] && r[4] > r[3])
                .map_or(rows.len(), |i| i + 1);
            Some(
                rows[..end]
                    .iter()
                    .map(|r| {
                        let pen = (2..5).fold(2, |b, i| if r[i] > r[b] { i } else { b });
                        let mut out = [r[0], r[1], 0.0, 0.0, 0.0];
                        out[pen] = 1.0;
                        out
                    })
                    .collect(),
            )
        }
        _ => None,
    };
    Ok(Prediction {
        top: ranked,
        abstraction: dist.map(|d| d[0]),
        decoded,
    })
}
