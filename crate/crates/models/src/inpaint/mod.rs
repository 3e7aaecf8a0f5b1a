//! Confidence-gated inpainting.

mod discriminator;
mod generator;
mod iterative;
pub mod losses;

use std::path::Path;

use candle_core::DType;
use declutter_core::{BinaryMask, ImageTensor};
use image::{GrayImage, Luma};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use discriminator::{ConstantCritic, Critic, Discriminator, DiscriminatorConfig};
pub use generator::{Generator, GeneratorConfig, GeneratorOutput};
pub use iterative::{iterative_inpaint, InpaintOptions, InpaintResult, IterationRecord};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};

pub const CHECKPOINT_KIND: &str = "inpaint-model";

/// Per-pixel artifact likelihood in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    values: Array2<f32>,
}

impl ConfidenceMap {
    pub fn new(values: Array2<f32>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("confidence values must lie in [0, 1]"));
        }
        Ok(Self { values })
    }

    pub fn from_clamped(values: Array2<f32>) -> Self {
        Self { values: values.mapv(|v| if v.is_nan() { 1.0 } else { v.clamp(0.0, 1.0) }) }
    }

    pub fn values(&self) -> &Array2<f32> {
        &self.values
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[[row, col]]
    }

    /// Single-channel 8-bit image with `round(255 * b)`.
    pub fn to_gray(&self) -> GrayImage {
        let (h, w) = self.dims();
        GrayImage::from_fn(w as u32, h as u32, |x, y| Luma([(self.values[[y as usize, x as usize]] * 255.0).round() as u8]))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_gray()
            .write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| Error::invalid(format!("png encoding failed: {e}")))?;
        Ok(out.into_inner())
    }
}

/// Fills the masked pixels of a corrupted image.
pub trait Inpainter: Send + Sync {
    /// Returns the generated image and its confidence map, both the size of
    /// `corrupted`.
    fn generate(&self, corrupted: &ImageTensor, mask: &BinaryMask) -> Result<(ImageTensor, ConfidenceMap)>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintModelConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl InpaintModelConfig {
    pub fn tiny() -> Self {
        Self { generator: GeneratorConfig::tiny(), discriminator: DiscriminatorConfig::tiny() }
    }

    pub fn reference() -> Self {
        Self { generator: GeneratorConfig::reference(), discriminator: DiscriminatorConfig::reference() }
    }
}

/// Generator and discriminator saved and loaded together.
#[derive(Debug, Clone)]
pub struct InpaintModel {
    pub generator: Generator,
    pub discriminator: Discriminator,
    /// Free-form training metadata carried through checkpoints.
    pub training: serde_json::Value,
}

impl InpaintModel {
    pub fn new(config: InpaintModelConfig, dtype: DType) -> Result<Self> {
        Ok(Self {
            generator: Generator::new(config.generator, dtype)?,
            discriminator: Discriminator::new(config.discriminator, dtype)?,
            training: serde_json::Value::Null,
        })
    }

    pub fn config(&self) -> InpaintModelConfig {
        InpaintModelConfig {
            generator: self.generator.config().clone(),
            discriminator: self.discriminator.config().clone(),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = self.generator.image_params().snapshot();
        tensors.extend(self.generator.confidence_params().snapshot());
        tensors.extend(self.discriminator.params().snapshot());
        let metadata = serde_json::json!({
            "config": self.config(),
            "native_resolution": self.generator.native_resolution(),
            "training": self.training,
        });
        Checkpoint::new(CHECKPOINT_KIND, metadata, tensors)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let config: InpaintModelConfig = serde_json::from_value(ck.metadata["config"].clone())?;
        let dtype = ck.tensors.first().map_or(DType::F32, |(_, t)| t.dtype());
        let mut model = Self::new(config, dtype)?;
        model.generator.image_params().load(&ck.tensors)?;
        model.generator.confidence_params().load(&ck.tensors)?;
        model.discriminator.params().load(&ck.tensors)?;
        model.training = ck.metadata["training"].clone();
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl Inpainter for InpaintModel {
    fn generate(&self, corrupted: &ImageTensor, mask: &BinaryMask) -> Result<(ImageTensor, ConfidenceMap)> {
        self.generator.generate(corrupted, mask)
    }
}
