//! Adversarial training of the inpainting generator.
//!
//! Every step runs one generator forward pass and then three updates:
//! the discriminator on the detached composite, the image branch on the
//! generator loss, and the confidence head on the confidence loss.
//! Corruption masks alternate between object masks and random strokes on
//! a fixed schedule.

use std::path::Path;

use candle_core::{Device, Tensor};
use declutter_core::{BinaryMask, ImageTensor};
use declutter_models::inpaint::losses::{loss_confidence, loss_discriminator, loss_generator, reconstruction_loss};
use declutter_models::nn::{images_to_tensor, masks_to_tensor, to_f64_vec};
use declutter_models::InpaintModel;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::TrainingConfig;
use crate::error::{Error, Result};
use crate::log::JsonLines;
use crate::optim::Adam;
use crate::strokes::{random_stroke_mask, StrokeMaskSpec};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InpaintTrainingOptions {
    /// Stop after this many steps even if epochs remain.
    pub max_steps: Option<usize>,
    pub strokes: StrokeMaskSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InpaintStepStats {
    pub step: usize,
    pub epoch: usize,
    pub stroke_masks: bool,
    pub loss_generator: f64,
    pub reconstruction: f64,
    pub adversarial: f64,
    pub loss_discriminator: f64,
    pub loss_confidence: f64,
}

#[derive(Debug, Clone)]
pub struct InpaintTrainingOutcome {
    pub model: InpaintModel,
    pub steps: Vec<InpaintStepStats>,
    pub epochs_run: usize,
}

/// Whether batch `index` (0-based) is corrupted with strokes: exactly
/// `floor(n * ratio)` of the first `n` batches are.
pub fn uses_strokes(index: usize, ratio: f64) -> bool {
    ((index + 1) as f64 * ratio).floor() > (index as f64 * ratio).floor()
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(to_f64_vec(t)?[0])
}

/// Trains generator and discriminator on `corpus`. Images and object masks
/// are resized to the generator's native resolution. With an `output`
/// directory, writes `checkpoints/inpaint/{epoch}.ckpt`, `best.ckpt` (by
/// mean reconstruction error) and `logs/inpaint.jsonl`.
pub fn train_inpaint_model(
    model: InpaintModel,
    corpus: &[ImageTensor],
    object_masks: &[BinaryMask],
    config: &TrainingConfig,
    options: &InpaintTrainingOptions,
    output: Option<&Path>,
) -> Result<InpaintTrainingOutcome> {
    config.validate()?;
    options.strokes.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("the inpainting corpus is empty"));
    }
    let side = model.generator.native_resolution();
    let dtype = model.generator.dtype();
    let resized: Vec<ImageTensor> = corpus
        .iter()
        .map(|img| if img.dims() == (side, side) { Ok(img.clone()) } else { img.resize(side, side) })
        .collect::<std::result::Result<_, _>>()?;
    let images = images_to_tensor(&resized.iter().collect::<Vec<_>>(), dtype)?;
    let objects: Vec<BinaryMask> = object_masks.iter().map(|m| m.resize(side, side)).collect();

    let mut opt_d = Adam::new(model.discriminator.params().vars(), config.lr_inpaint)?;
    let mut opt_g = Adam::new(model.generator.image_params().vars(), config.lr_inpaint)?;
    let mut opt_b = Adam::new(model.generator.confidence_params().vars(), config.lr_inpaint)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = match output {
        Some(dir) => JsonLines::create(dir.join("logs").join("inpaint.jsonl"))?,
        None => JsonLines::disabled(),
    };
    let mut steps = Vec::new();
    let mut best = f64::INFINITY;
    let mut epochs_run = 0;
    let step_limit = options.max_steps.unwrap_or(usize::MAX);

    'epochs: for epoch in 1..=config.epochs {
        if steps.len() >= step_limit {
            break;
        }
        epochs_run = epoch;
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_recon = Vec::new();
        for chunk in order.chunks(config.batch_size_inpaint) {
            if steps.len() >= step_limit {
                break;
            }
            let index = steps.len();
            let stroke = objects.is_empty() || uses_strokes(index, config.stroke_ratio);
            let masks: Vec<BinaryMask> = chunk
                .iter()
                .map(|_| {
                    if stroke {
                        random_stroke_mask(side, side, &options.strokes.with_seed(rng.gen()))
                    } else {
                        Ok(objects[rng.gen_range(0..objects.len())].clone())
                    }
                })
                .collect::<Result<_>>()?;
            let ids = Tensor::from_vec(chunk.iter().map(|&i| i as u32).collect::<Vec<_>>(), chunk.len(), &Device::Cpu)?;
            let p = images.index_select(&ids, 0)?;
            let m = masks_to_tensor(&masks.iter().collect::<Vec<_>>(), dtype)?;
            let corrupted = p.broadcast_mul(&m.affine(-1.0, 1.0)?)?;
            let out = model.generator.forward(&corrupted, &m)?;

            let l_d = loss_discriminator(&p, &out.image.detach(), &m, &model.discriminator, config.hinge)?;
            let mut grads = l_d.backward()?;
            opt_d.clipped_step(&mut grads, config.grad_clip_norm)?;

            let recon = reconstruction_loss(&p, &out.image)?;
            let l_g = loss_generator(&p, &out.image, &m, &model.discriminator)?;
            let mut grads = l_g.backward()?;
            opt_g.clipped_step(&mut grads, config.grad_clip_norm)?;

            let l_b = loss_confidence(&p, &out.image.detach(), &out.confidence, &m)?;
            let mut grads = l_b.backward()?;
            opt_b.clipped_step(&mut grads, config.grad_clip_norm)?;

            let (g, r) = (scalar(&l_g)?, scalar(&recon)?);
            let stats = InpaintStepStats {
                step: index + 1,
                epoch,
                stroke_masks: stroke,
                loss_generator: g,
                reconstruction: r,
                adversarial: g - r,
                loss_discriminator: scalar(&l_d)?,
                loss_confidence: scalar(&l_b)?,
            };
            log.write(&stats)?;
            epoch_recon.push(r);
            steps.push(stats);
        }
        if let Some(dir) = output {
            let mean = epoch_recon.iter().sum::<f64>() / epoch_recon.len().max(1) as f64;
            let mut ck = model.to_checkpoint();
            ck.metadata["training"] = serde_json::json!({ "epoch": epoch, "steps": steps.len(), "reconstruction": mean });
            let dir = dir.join("checkpoints").join("inpaint");
            ck.save(dir.join(format!("{epoch}.ckpt")))?;
            if mean < best {
                best = mean;
                ck.save(dir.join("best.ckpt"))?;
            }
        }
        if steps.len() >= step_limit {
            break 'epochs;
        }
    }
    Ok(InpaintTrainingOutcome { model, steps, epochs_run })
}
