use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which loss drives early stopping and the choice of `best.ckpt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monitor {
    #[default]
    Training,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Weight of the aesthetic error relative to the content error.
    pub lambda_aes: f64,
    pub epochs: usize,
    pub batch_size_score: usize,
    pub lr_score: f64,
    pub early_stop_patience: usize,
    pub early_stop_monitor: Monitor,
    pub grad_clip_norm: f64,
    pub input_resolution: usize,
    pub lr_inpaint: f64,
    pub batch_size_inpaint: usize,
    /// Share of the data held out for validation.
    pub validation_fraction: f64,
    /// Share of inpainting batches corrupted with random strokes rather
    /// than object masks.
    pub stroke_ratio: f64,
    /// Clamp each discriminator term at zero.
    pub hinge: bool,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda_aes: 1.0,
            epochs: 100,
            batch_size_score: 32,
            lr_score: 4e-4,
            early_stop_patience: 15,
            early_stop_monitor: Monitor::Training,
            grad_clip_norm: 5.0,
            input_resolution: 256,
            lr_inpaint: 1e-4,
            batch_size_inpaint: 64,
            validation_fraction: 0.1,
            stroke_ratio: 0.5,
            hinge: true,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda_aes", self.lambda_aes),
            ("lr_score", self.lr_score),
            ("lr_inpaint", self.lr_inpaint),
            ("grad_clip_norm", self.grad_clip_norm),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        let counts = [
            ("epochs", self.epochs),
            ("batch_size_score", self.batch_size_score),
            ("early_stop_patience", self.early_stop_patience),
            ("input_resolution", self.input_resolution),
            ("batch_size_inpaint", self.batch_size_inpaint),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation_fraction must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.stroke_ratio) {
            return Err(Error::invalid("stroke_ratio must lie in [0, 1]"));
        }
        Ok(())
    }
}
