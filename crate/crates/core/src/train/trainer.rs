use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sketch::LabeledSample;

use super::{evaluate, total_loss, Checkpoint, LossBreakdown, Model};

/// One line of the JSON-lines training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub lr: f64,
    pub loss: f64,
    pub ce: f64,
    pub sketch2vec: f64,
    pub codebook: f64,
    pub mixup: f64,
    /// Batches whose mixup term was skipped for lack of a source.
    pub mixup_skipped: usize,
    pub train_accuracy: f64,
    pub abstraction_accuracy: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    /// Path of the last checkpoint written, when an output directory was
    /// given.
    pub checkpoint: Option<PathBuf>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.log.last().map_or(f64::NAN, |e| e.loss)
    }
}

pub const LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join("checkpoints").join(format!("epoch-{epoch:04}.json"))
}

fn labels_for(samples: &[&LabeledSample], seen: &[String]) -> Result<Vec<usize>> {
    let index: HashMap<&str, usize> = seen.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    samples
        .iter()
        .map(|s| {
            index.get(s.category.as_str()).copied().ok_or_else(|| {
                Error::InvalidInput(format!("training sample `{}` has unseen category `{}`", s.id, s.category))
            })
        })
        .collect()
}

/// Few-shot training with Adam over the trainable parameter set only.
///
/// With `out_dir`, appends one JSON line per epoch to `train_log.jsonl`,
/// writes `checkpoints/epoch-NNNN.json` every `checkpoint_every` epochs and
/// the final state to `checkpoint.json`.
pub fn train(
    model: &Model,
    samples: &[&LabeledSample],
    seen: &[String],
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let cfg = model.config.clone();
    if samples.is_empty() {
        return Err(Error::InvalidInput("no training samples".into()));
    }
    let labels = labels_for(samples, seen)?;
    let tokens = model.tokenize(seen)?;
    let vars: Vec<_> = model.trainable_vars().into_iter().map(|(_, v)| v).collect();
    let mut opt = AdamW::new(
        vars,
        ParamsAdamW {
            lr: cfg.learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let mut log_file = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let p = dir.join(LOG_FILE);
            Some((std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?, p))
        }
        None => None,
    };

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut checkpoint = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = LossBreakdown::default();
        let mut steps = 0;
        let mut skipped = 0;
        for chunk in order.chunks(cfg.batch_size) {
            steps += 1;
            let batch: Vec<_> = chunk.iter().map(|&i| samples[i]).collect();
            let batch_labels: Vec<_> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, parts) = total_loss(model, &batch, &batch_labels, &tokens, &mut rng)?;
            for (term, value) in parts.terms() {
                if !value.is_finite() {
                    return Err(Error::NonFinite {
                        term: term.to_string(),
                        epoch,
                        step: steps,
                    });
                }
            }
            opt.backward_step(&loss)?;
            sums.total += parts.total;
            sums.ce += parts.ce;
            sums.sketch2vec += parts.sketch2vec;
            sums.codebook += parts.codebook;
            sums.mixup += parts.mixup;
            skipped += parts.mixup_skipped as usize;
        }
        if skipped > 0 {
            warn!("epoch {epoch}: mixup skipped on {skipped} of {steps} batches lacking a source");
        }
        let report = evaluate(model, samples, seen)?;
        let n = steps as f64;
        let entry = EpochLog {
            epoch,
            steps,
            lr: cfg.learning_rate,
            loss: sums.total / n,
            ce: sums.ce / n,
            sketch2vec: sums.sketch2vec / n,
            codebook: sums.codebook / n,
            mixup: sums.mixup / n,
            mixup_skipped: skipped,
            train_accuracy: report.top1,
            abstraction_accuracy: report.abstraction_accuracy,
        };
        info!(
            "epoch {epoch}: loss {} (ce {}) train acc {:.2}%",
            entry.loss, entry.ce, entry.train_accuracy
        );
        if let Some((file, path)) = log_file.as_mut() {
            let line = serde_json::to_string(&entry)?;
            writeln!(file, "{line}").map_err(|e| Error::io(path.as_path(), e))?;
        }
        if let Some(dir) = out_dir {
            let last = epoch == cfg.epochs;
            if epoch % cfg.checkpoint_every == 0 || last {
                let ckpt = Checkpoint::capture(model, seen, epoch, &rng)?;
                ckpt.save(&checkpoint_path(dir, epoch))?;
                if last {
                    let p = dir.join(CHECKPOINT_FILE);
                    ckpt.save(&p)?;
                    checkpoint = Some(p);
                }
            }
        }
        log.push(entry);
    }
    Ok(TrainOutcome { log, checkpoint })
}
