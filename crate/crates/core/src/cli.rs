//! Command-line surface: `prepare-data`, `train`, `eval` and `predict`.
//!
//! Every command reads an optional flat TOML run config; flags override it.
//! The effective config is echoed as `config.toml` into each output
//! directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::backbone::{load_pretrained, Backbone, CLIP_ADAPTER};
use crate::error::{Error, Result};
use crate::nn::to_f64_vec;
use crate::sketch::{
    build_split, filter_edgemaps, ingest_edgemap_dir, ingest_stroke_file, load_image_raster, rasterize, Abstraction,
    DatasetSplit, IngestOptions, LabeledSample, Manifest, RasterOptions, RasterSketch, StrokeFormat,
    DEFAULT_MAX_POINTS,
};
use crate::train::{evaluate_split, predict, train, Checkpoint, Model, TrainConfig, Which};

/// Directory searched for adapter weights when no path is given.
pub const CACHE_ENV: &str = "SKETCHCLIP_CACHE";
pub const CONFIG_ECHO: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SPLIT_FILE: &str = "split.json";

/// Everything a run needs besides the training hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub adapter: String,
    pub weights: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub tu_path: Option<PathBuf>,
    pub qd_path: Option<PathBuf>,
    pub edgemap_dir: Option<PathBuf>,
    pub stroke_format: StrokeFormat,
    pub seen_categories: Vec<String>,
    pub unseen_categories: Vec<String>,
    pub shots: usize,
    pub split_seed: u64,
    /// Stroke width in input pixels; defaults to `max(side / 112, 1)`.
    pub stroke_width: Option<f64>,
    pub max_points: usize,
    pub edgemap_keep_fraction: f64,
    pub manifest: Option<PathBuf>,
    pub split: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            adapter: CLIP_ADAPTER.into(),
            weights: None,
            output_dir: None,
            tu_path: None,
            qd_path: None,
            edgemap_dir: None,
            stroke_format: StrokeFormat::Stroke3Delta,
            seen_categories: Vec::new(),
            unseen_categories: Vec::new(),
            shots: 10,
            split_seed: 0,
            stroke_width: None,
            max_points: DEFAULT_MAX_POINTS,
            edgemap_keep_fraction: 1.0,
            manifest: None,
            split: None,
        }
    }
}

/// Flat run config: data keys and training keys side by side.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let train_keys: Vec<String> = match serde_json::to_value(TrainConfig::default())? {
            serde_json::Value::Object(m) => m.keys().cloned().collect(),
            _ => unreachable!("struct serializes to an object"),
        };
        let (train, data): (toml::Table, toml::Table) =
            table.into_iter().partition(|(k, _)| train_keys.contains(k));
        let err = |e: toml::de::Error| Error::Config(e.to_string());
        Ok(Self {
            data: toml::Value::Table(data).try_into().map_err(err)?,
            train: toml::Value::Table(train).try_into().map_err(err)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        let to_table = |v: toml::Value| match v {
            toml::Value::Table(t) => t,
            _ => unreachable!("struct serializes to a table"),
        };
        let err = |e: toml::ser::Error| Error::Config(e.to_string());
        let mut table = to_table(toml::Value::try_from(&self.data).map_err(err)?);
        table.extend(to_table(toml::Value::try_from(&self.train).map_err(err)?));
        toml::to_string(&table).map_err(err)
    }

    pub fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join(CONFIG_ECHO);
        std::fs::write(&p, self.to_toml()?).map_err(|e| Error::io(&p, e))
    }

    fn output_dir(&self) -> Result<PathBuf> {
        self.data
            .output_dir
            .clone()
            .ok_or_else(|| Error::Config("no output directory (--out or output_dir)".into()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "sketchclip", version, about = "Abstraction-aware prompt learning for sketch classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest stroke files and edgemaps, filter edgemaps, build a split.
    PrepareData(PrepareArgs),
    /// Train prompts, Meta-Net, codebook, decoder and layer norms.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the seen or unseen half of a split.
    Eval(EvalArgs),
    /// Classify one image or stroke record and print JSON.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat TOML run config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Backbone adapter: `clip-vit-b16`, `toy` or `toy:<seed>`.
    #[arg(long)]
    pub adapter: Option<String>,
    /// Adapter weights file.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// TU-Berlin-style stroke file (medium abstraction).
    #[arg(long)]
    pub tu: Option<PathBuf>,
    /// QuickDraw-style stroke file (high abstraction).
    #[arg(long)]
    pub qd: Option<PathBuf>,
    /// Edgemap root with one sub-directory per category (low abstraction).
    #[arg(long)]
    pub edgemaps: Option<PathBuf>,
    #[arg(long)]
    pub stroke_format: Option<StrokeFormat>,
    /// Comma-separated seen categories.
    #[arg(long, value_delimiter = ',')]
    pub seen: Option<Vec<String>>,
    /// Comma-separated unseen categories.
    #[arg(long, value_delimiter = ',')]
    pub unseen: Option<Vec<String>>,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of edgemaps kept per category by zero-shot confidence.
    #[arg(long)]
    pub keep_fraction: Option<f64>,
    #[arg(long)]
    pub stroke_width: Option<f64>,
    #[arg(long)]
    pub max_points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub prompt_depth: Option<usize>,
    #[arg(long)]
    pub context_tokens: Option<usize>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub beta3: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub no_meta_net: bool,
    #[arg(long)]
    pub no_layer_norm: bool,
    #[arg(long)]
    pub no_codebook: bool,
    #[arg(long)]
    pub no_mixup: bool,
    #[arg(long)]
    pub no_sketch2vec: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value = "unseen")]
    pub which: Which,
    /// Score unseen samples against seen and unseen names together.
    #[arg(long)]
    pub joint: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Image file to classify.
    #[arg(long, conflicts_with = "strokes", required_unless_present = "strokes")]
    pub image: Option<PathBuf>,
    /// Stroke file; one record is classified.
    #[arg(long)]
    pub strokes: Option<PathBuf>,
    /// Zero-based record index in the stroke file.
    #[arg(long, default_value_t = 0)]
    pub record: usize,
    #[arg(long, default_value = "stroke3-delta")]
    pub stroke_format: StrokeFormat,
    /// Comma-separated candidate categories; defaults to the seen ones.
    #[arg(long, value_delimiter = ',')]
    pub categories: Option<Vec<String>>,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// Also decode a stroke-5 sequence.
    #[arg(long)]
    pub decode: bool,
}

fn base_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(a) = &common.adapter {
        cfg.data.adapter = a.clone();
    }
    if let Some(w) = &common.weights {
        cfg.data.weights = Some(w.clone());
    }
    if let Some(o) = &common.out {
        cfg.data.output_dir = Some(o.clone());
    }
    Ok(cfg)
}

/// Weights path: explicit, else `$SKETCHCLIP_CACHE/<adapter>/model.safetensors`
/// when that file exists.
pub fn resolve_weights(adapter: &str, explicit: Option<&Path>) -> Option<PathBuf> {
    explicit.map(Path::to_path_buf).or_else(|| {
        let dir = std::env::var_os(CACHE_ENV)?;
        let p = PathBuf::from(dir).join(adapter).join("model.safetensors");
        p.exists().then_some(p)
    })
}

fn load_backbone(data: &DataConfig) -> Result<Backbone> {
    let weights = resolve_weights(&data.adapter, data.weights.as_deref());
    load_pretrained(&data.adapter, weights.as_deref())
}

fn raster_options(data: &DataConfig, backbone: &Backbone) -> RasterOptions {
    let side = backbone.image_size();
    let width = data.stroke_width.unwrap_or((side as f64 / 112.0).max(1.0));
    RasterOptions::new(side, width, backbone.pixel_norm)
}

/// Zero-shot scorer on the unprompted backbone.
fn zero_shot(backbone: &Backbone) -> impl Fn(&RasterSketch, &[String]) -> Result<Vec<f64>> + '_ {
    move |raster, names| {
        let pixels = backbone.image_batch(&[raster])?;
        let f = backbone.encode_images(&pixels, None)?;
        let tokens = backbone.tokenize(names, 0)?;
        let t = backbone.encode_text(&tokens, None)?;
        to_f64_vec(&backbone.similarity.probabilities(&f, &t)?)
    }
}

pub fn cmd_prepare_data(args: &PrepareArgs) -> Result<()> {
    let mut cfg = base_config(&args.common)?;
    let d = &mut cfg.data;
    macro_rules! set {
        ($src:expr, $dst:expr) => {
            if let Some(v) = $src.clone() {
                $dst = v.into();
            }
        };
    }
    set!(args.tu, d.tu_path);
    set!(args.qd, d.qd_path);
    set!(args.edgemaps, d.edgemap_dir);
    set!(args.stroke_format, d.stroke_format);
    set!(args.seen, d.seen_categories);
    set!(args.unseen, d.unseen_categories);
    set!(args.shots, d.shots);
    set!(args.seed, d.split_seed);
    set!(args.keep_fraction, d.edgemap_keep_fraction);
    set!(args.stroke_width, d.stroke_width);
    set!(args.max_points, d.max_points);
    let out = cfg.output_dir()?;
    let d = &cfg.data;
    if d.seen_categories.is_empty() {
        return Err(Error::Config("no seen categories (--seen or seen_categories)".into()));
    }
    let mut categories = d.seen_categories.clone();
    categories.extend(d.unseen_categories.iter().cloned());

    let backbone = load_backbone(d)?;
    let raster = raster_options(d, &backbone);
    let mut samples: Vec<LabeledSample> = Vec::new();
    let mut formats = HashMap::new();
    for (path, level) in [(&d.tu_path, Abstraction::Medium), (&d.qd_path, Abstraction::High)] {
        let Some(path) = path else { continue };
        let opts = IngestOptions {
            format: d.stroke_format,
            abstraction: level,
            raster,
            max_points: d.max_points,
        };
        let report = ingest_stroke_file(path, &categories, &opts)?;
        if report.rejected() > 0 {
            log::warn!("{}: rejected {} records", path.display(), report.rejected());
        }
        formats.insert(path.clone(), d.stroke_format);
        samples.extend(report.samples);
    }
    if let Some(root) = &d.edgemap_dir {
        let report = ingest_edgemap_dir(root, &categories, raster.side, &raster.norm)?;
        let kept = if d.edgemap_keep_fraction < 1.0 {
            let scorer = zero_shot(&backbone);
            filter_edgemaps(report.samples, &categories, &scorer, d.edgemap_keep_fraction)?.kept
        } else {
            report.samples
        };
        samples.extend(kept);
    }
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples ingested (give --tu, --qd or --edgemaps)".into()));
    }
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    let manifest = Manifest::from_samples(&samples, &categories, raster, d.max_points, &formats)?;
    let split = build_split(&samples, &d.seen_categories, &d.unseen_categories, d.shots, d.split_seed)?;

    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    manifest.save(&out.join(MANIFEST_FILE))?;
    split.save(&out.join(SPLIT_FILE))?;
    let mut echo = cfg.clone();
    echo.data.manifest = Some(out.join(MANIFEST_FILE));
    echo.data.split = Some(out.join(SPLIT_FILE));
    echo.echo(&out)?;
    for (level, n) in manifest.count_by_source() {
        println!("{}: {n}", level.source_tag());
    }
    println!(
        "train {}  eval-seen {}  eval-unseen {}",
        split.train_samples.len(),
        split.eval_seen_samples.len(),
        split.eval_unseen_samples.len()
    );
    Ok(())
}

fn load_data(cfg: &RunConfig, manifest: &Option<PathBuf>, split: &Option<PathBuf>) -> Result<(Vec<LabeledSample>, DatasetSplit)> {
    let manifest = manifest
        .clone()
        .or_else(|| cfg.data.manifest.clone())
        .ok_or_else(|| Error::Config("no manifest (--manifest or manifest)".into()))?;
    let split = split
        .clone()
        .or_else(|| cfg.data.split.clone())
        .ok_or_else(|| Error::Config("no split (--split or split)".into()))?;
    let samples = Manifest::load(&manifest)?.materialize()?;
    Ok((samples, DatasetSplit::load(&split)?))
}

pub fn cmd_train(args: &TrainArgs) -> Result<f64> {
    let mut cfg = base_config(&args.common)?;
    let t = &mut cfg.train;
    macro_rules! set {
        ($src:expr, $dst:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(args.epochs, t.epochs);
    set!(args.lr, t.learning_rate);
    set!(args.batch_size, t.batch_size);
    set!(args.seed, t.seed);
    set!(args.prompt_depth, t.prompt_depth);
    set!(args.context_tokens, t.context_tokens);
    set!(args.beta1, t.beta1);
    set!(args.beta2, t.beta2);
    set!(args.beta3, t.beta3);
    set!(args.alpha, t.alpha);
    t.meta_net &= !args.no_meta_net;
    t.layer_norm &= !args.no_layer_norm;
    t.codebook &= !args.no_codebook;
    t.mixup &= !args.no_mixup;
    t.sketch2vec &= !args.no_sketch2vec;
    cfg.train.validate()?;
    let out = cfg.output_dir()?;
    let (pool, split) = load_data(&cfg, &args.manifest, &args.split)?;
    let backbone = load_backbone(&cfg.data)?;
    check_raster_side(&pool, &backbone)?;
    let model = Model::new(backbone, cfg.train.clone())?;
    cfg.echo(&out)?;
    let samples = crate::train::select(&pool, &split.train_samples)?;
    let outcome = train(&model, &samples, &split.seen_categories, Some(&out))?;
    let last = outcome.log.last().expect("at least one epoch");
    println!("epochs {}", last.epoch);
    println!("final loss {}", last.loss);
    println!("train accuracy {}", last.train_accuracy);
    Ok(last.loss)
}

fn check_raster_side(pool: &[LabeledSample], backbone: &Backbone) -> Result<()> {
    match pool.first() {
        Some(s) if s.raster.side() != backbone.image_size() => Err(Error::Config(format!(
            "manifest rasters are {} px but adapter `{}` expects {} px",
            s.raster.side(),
            backbone.adapter,
            backbone.image_size()
        ))),
        _ => Ok(()),
    }
}

fn open_checkpoint(path: &Path, weights: Option<&Path>) -> Result<(Checkpoint, Model)> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    let ckpt = Checkpoint::load(path)?;
    let weights = resolve_weights(&ckpt.adapter, weights);
    let model = ckpt.restore(weights.as_deref())?;
    Ok((ckpt, model))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<f64> {
    let mut cfg = base_config(&args.common)?;
    let (ckpt, mut model) = open_checkpoint(&args.checkpoint, cfg.data.weights.as_deref())?;
    if let Some(a) = &args.common.adapter {
        if *a != ckpt.adapter {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained on adapter `{}`, not `{a}`",
                ckpt.adapter
            )));
        }
    }
    cfg.data.adapter = ckpt.adapter.clone();
    cfg.train = ckpt.config.clone();
    if args.joint {
        cfg.train.joint_label_space = true;
        model.config.joint_label_space = true;
    }
    let out = cfg.output_dir()?;
    let (pool, split) = load_data(&cfg, &args.manifest, &args.split)?;
    check_raster_side(&pool, &model.backbone)?;
    let report = evaluate_split(&model, &pool, &split, args.which)?;
    cfg.echo(&out)?;
    report.write(&out)?;
    println!("{} top-1 {}", args.which, report.top1);
    if let Some(a) = report.abstraction_accuracy {
        println!("abstraction accuracy {a}");
    }
    Ok(report.top1)
}

pub fn cmd_predict(args: &PredictArgs) -> Result<String> {
    let (ckpt, model) = open_checkpoint(&args.checkpoint, args.weights.as_deref())?;
    let side = model.backbone.image_size();
    let raster = match (&args.image, &args.strokes) {
        (Some(img), _) => load_image_raster(img, side, &model.backbone.pixel_norm)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let line = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .nth(args.record)
                .ok_or_else(|| Error::InvalidInput(format!("{} has no record {}", path.display(), args.record)))?;
            let record = crate::sketch::ingest::parse_record(line, args.stroke_format, DEFAULT_MAX_POINTS, args.record)?;
            let width = (side as f64 / 112.0).max(1.0);
            rasterize(&record.vector, &RasterOptions::new(side, width, model.backbone.pixel_norm))?
        }
        (None, None) => return Err(Error::InvalidInput("give --image or --strokes".into())),
    };
    let names = args.categories.clone().unwrap_or_else(|| ckpt.seen_categories.clone());
    let prediction = predict(&model, &raster, &names, args.top_k, args.decode)?;
    Ok(serde_json::to_string_pretty(&prediction)?)
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::PrepareData(a) => cmd_prepare_data(a),
        Command::Train(a) => cmd_train(a).map(|_| ()),
        Command::Eval(a) => cmd_eval(a).map(|_| ()),
        Command::Predict(a) => cmd_predict(a).map(|json| println!("{json}")),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
