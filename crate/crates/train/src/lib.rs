//! Training harness for the declutter models: manifest ingestion,
//! corruption masks, optimization with clipping and early stopping,
//! checkpointing and JSON-lines logs.

pub mod config;
pub mod dataset;
pub mod error;
pub mod inpaint;
pub mod log;
pub mod optim;
pub mod score;
pub mod strokes;
pub mod synthetic;

pub use crate::config::{Monitor, TrainingConfig};
pub use crate::dataset::{ingest_score_dataset, IngestReport, RecordIoError, ScoreDatasetRecord, ScoreSample};
pub use crate::error::{Error, Result};
pub use crate::inpaint::{train_inpaint_model, uses_strokes, InpaintStepStats, InpaintTrainingOptions, InpaintTrainingOutcome};
pub use crate::optim::{clip_gradients, early_stop_check, run_epochs, EpochRun};
pub use crate::score::{dataset_loss, prepare_scenes, train_score_model, ScoreEpochStats, ScoreTrainingOutcome};
pub use crate::strokes::{random_stroke_mask, StrokeMaskSpec};
