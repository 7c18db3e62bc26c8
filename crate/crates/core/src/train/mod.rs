//! Loss assembly, few-shot training, checkpoints and evaluation.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod model;
pub mod plot;
pub mod trainer;

pub use bench::{OverlapBenchmark, PairedRun};
pub use checkpoint::{Checkpoint, RngState, StoredTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use eval::{
    evaluate, evaluate_split, predict, predict_rasters, select, EvalReport, HistogramBin, Prediction,
    RankedCategory, SamplePrediction, Tally, Which,
};
pub use model::{count_correct, cross_entropy_logits, total_loss, LossBreakdown, Model};
pub use trainer::{checkpoint_path, train, EpochLog, TrainOutcome, CHECKPOINT_FILE, LOG_FILE};
