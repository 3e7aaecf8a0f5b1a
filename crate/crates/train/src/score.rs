//! Fitting the score head and mixing network.
//!
//! The backbone is frozen, so every scene's features (original image and
//! one counterfactual per element) are computed once up front; each
//! optimization step only runs the trainable heads.

use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use declutter_core::segmentation::Segmenter;
use declutter_models::nn::to_f64_vec;
use declutter_models::{total_loss_tensor, ScoreModel};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Monitor, TrainingConfig};
use crate::dataset::ScoreSample;
use crate::error::{Error, Result};
use crate::log::JsonLines;
use crate::optim::{run_epochs, Adam};

/// Frozen-backbone features of one labeled scene.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub original: Tensor,
    pub counterfactuals: Tensor,
    pub region: Tensor,
    pub labels: [f64; 2],
}

/// Computes features for every sample that has at least one element.
/// Returns the prepared scenes and the number of samples skipped because
/// they had none.
pub fn prepare_scenes(
    model: &ScoreModel,
    samples: &[ScoreSample],
    segmenter: &dyn Segmenter,
) -> Result<(Vec<PreparedScene>, usize)> {
    let mut scenes = Vec::with_capacity(samples.len());
    let mut skipped = 0;
    for s in samples {
        let masks = match &s.masks {
            Some(m) => m.clone(),
            None => segmenter.segment(&s.image)?,
        };
        if masks.is_empty() {
            skipped += 1;
            continue;
        }
        let subs = model.counterfactuals(&s.image, &masks)?;
        let refs: Vec<_> = subs.iter().collect();
        scenes.push(PreparedScene {
            original: model.extract_batch(&[&model.prepare_image(&s.image)?])?,
            counterfactuals: model.extract_batch(&refs)?,
            region: model.region_weights(&masks)?,
            labels: [s.y_aes, s.y_content],
        });
    }
    Ok((scenes, skipped))
}

/// `(N, 2)` predicted scene scores and the matching labels.
fn predict(model: &ScoreModel, scenes: &[&PreparedScene]) -> Result<(Tensor, Tensor)> {
    let preds = scenes
        .iter()
        .map(|s| Ok(model.scene_forward(&s.original, &s.counterfactuals, &s.region)?.overall))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<f64> = scenes.iter().flat_map(|s| s.labels).collect();
    let labels = Tensor::from_vec(labels, (scenes.len(), 2), &Device::Cpu)?.to_dtype(model.dtype())?;
    Ok((Tensor::stack(&preds, 0)?, labels))
}

/// Loss components of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossParts {
    pub total: f64,
    pub aes_mse: f64,
    pub content_mse: f64,
}

fn loss_parts(preds: &Tensor, labels: &Tensor, lambda: f64) -> Result<(Tensor, LossParts)> {
    let loss = total_loss_tensor(preds, labels, lambda)?;
    let mse = to_f64_vec(&(preds - labels)?.sqr()?.mean(0)?)?;
    let total = to_f64_vec(&loss)?[0];
    Ok((loss, LossParts { total, aes_mse: mse[0], content_mse: mse[1] }))
}

/// Total loss over a set of scenes without touching gradients.
pub fn dataset_loss(model: &ScoreModel, scenes: &[PreparedScene], lambda_aes: f64) -> Result<f64> {
    if scenes.is_empty() {
        return Err(Error::invalid("no scenes to evaluate"));
    }
    let refs: Vec<&PreparedScene> = scenes.iter().collect();
    let (preds, labels) = predict(model, &refs)?;
    Ok(loss_parts(&preds.detach(), &labels, lambda_aes)?.1.total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreEpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Serialize)]
struct StepRecord {
    step: usize,
    epoch: usize,
    #[serde(flatten)]
    loss: LossParts,
    grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct ScoreTrainingOutcome {
    pub model: ScoreModel,
    pub epochs: Vec<ScoreEpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub skipped_scenes: usize,
    /// Indices (into the input samples that had elements) held out for
    /// validation.
    pub validation_indices: Vec<usize>,
}

impl ScoreTrainingOutcome {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

/// Deterministic split of `n` items into training and validation indices.
pub fn split_indices(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64 * validation_fraction).round() as usize).min(n.saturating_sub(1));
    let val = idx.split_off(n - n_val);
    (idx, val)
}

fn checkpoint_dir(output: &Path, model: &str) -> PathBuf {
    output.join("checkpoints").join(model)
}

/// Trains `model` on `samples`. With an `output` directory, writes
/// `checkpoints/score/{epoch}.ckpt`, `checkpoints/score/best.ckpt` and the
/// JSON-lines log `logs/score.jsonl` there.
pub fn train_score_model(
    model: ScoreModel,
    samples: &[ScoreSample],
    segmenter: &dyn Segmenter,
    config: &TrainingConfig,
    output: Option<&Path>,
) -> Result<ScoreTrainingOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("the score dataset is empty"));
    }
    if config.input_resolution != model.input_resolution() {
        return Err(Error::invalid(format!(
            "config input resolution {} does not match the model's {}",
            config.input_resolution,
            model.input_resolution()
        )));
    }
    let (scenes, skipped_scenes) = prepare_scenes(&model, samples, segmenter)?;
    if scenes.is_empty() {
        return Err(Error::invalid("no sample contains a segmented element"));
    }
    let (train_idx, validation_indices) = split_indices(scenes.len(), config.validation_fraction, config.seed);
    if config.early_stop_monitor == Monitor::Validation && validation_indices.is_empty() {
        return Err(Error::invalid("validation monitoring needs a non-empty validation split"));
    }
    let val_scenes: Vec<PreparedScene> = validation_indices.iter().map(|&i| scenes[i].clone()).collect();

    let mut vars = model.score_params().vars();
    vars.extend(model.mixing_params().vars());
    let mut adam = Adam::new(vars, config.lr_score)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut log = match output {
        Some(dir) => JsonLines::create(dir.join("logs").join("score.jsonl"))?,
        None => JsonLines::disabled(),
    };
    let mut epochs = Vec::new();
    let mut best_monitored = f64::INFINITY;
    let mut step = 0;

    let run = run_epochs(config.epochs, config.early_stop_patience, |epoch| {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(config.batch_size_score) {
            let batch: Vec<&PreparedScene> = chunk.iter().map(|&i| &scenes[i]).collect();
            let (preds, labels) = predict(&model, &batch)?;
            let (loss, parts) = loss_parts(&preds, &labels, config.lambda_aes)?;
            let mut grads = loss.backward()?;
            let grad_norm = adam.clipped_step(&mut grads, config.grad_clip_norm)?;
            step += 1;
            log.write(&StepRecord { step, epoch, loss: parts, grad_norm })?;
            weighted += parts.total * chunk.len() as f64;
        }
        let train_loss = weighted / train_idx.len() as f64;
        let val_loss = if val_scenes.is_empty() {
            None
        } else {
            Some(dataset_loss(&model, &val_scenes, config.lambda_aes)?)
        };
        let stats = ScoreEpochStats { epoch, train_loss, val_loss };
        log.write(&stats)?;
        let monitored = match config.early_stop_monitor {
            Monitor::Training => train_loss,
            Monitor::Validation => val_loss.expect("validation split is non-empty"),
        };
        if let Some(dir) = output {
            let mut ck = model.to_checkpoint();
            ck.metadata["training"] = serde_json::to_value(&stats)?;
            let dir = checkpoint_dir(dir, "score");
            ck.save(dir.join(format!("{epoch}.ckpt")))?;
            if monitored < best_monitored {
                ck.save(dir.join("best.ckpt"))?;
            }
        }
        best_monitored = best_monitored.min(monitored);
        epochs.push(stats);
        Ok(monitored)
    })?;

    Ok(ScoreTrainingOutcome {
        model,
        epochs,
        best_epoch: run.best_epoch,
        stopped_early: run.stopped_early,
        skipped_scenes,
        validation_indices,
    })
}
