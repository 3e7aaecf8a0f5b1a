//! Counterfactual contribution estimator.
//!
//! Each element's region is blurred to form a counterfactual sub-image; a
//! frozen backbone turns every sub-image into a feature map and a small
//! trainable head scores it for aesthetics and content. A mixing network
//! looks at the features of the *original* image, pooled globally and over
//! each element's region, and emits one logit per element and head; the
//! softmax over elements gives the weights that combine the element scores
//! into scene scores.

use std::path::Path;

use candle_core::{DType, Device, Tensor, D};
use declutter_core::segmentation::TAXONOMY_VERSION;
use declutter_core::{
    blur_element, weights_from_logits, ElementScores, GaussianKernel, ImageTensor, MaskSet,
    MixingWeights, SceneAssessment,
};
use serde::{Deserialize, Serialize};

use crate::backbone::{Backbone, BackboneConfig};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::{images_to_tensor, rng, to_f64_vec, Conv2d, Linear, ParamStore};

pub const CHECKPOINT_KIND: &str = "score-model";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreHeadConfig {
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub hidden: usize,
    /// Average the backbone features over space before the first
    /// convolution, so scores do not depend on where an element sits.
    #[serde(default)]
    pub pool_input: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModelConfig {
    pub backbone: BackboneConfig,
    pub head: ScoreHeadConfig,
    pub mixing_hidden: usize,
    pub blur_size: usize,
    pub blur_variance: f64,
    pub seed: u64,
}

impl ScoreModelConfig {
    /// Tiny backbone pooled to a 2x2 grid: coarse enough that the mixing
    /// network cannot single out individual elements by position alone.
    pub fn tiny() -> Self {
        Self {
            backbone: BackboneConfig { output_grid: Some((2, 2)), ..BackboneConfig::tiny() },
            head: ScoreHeadConfig { conv1_channels: 8, conv2_channels: 8, hidden: 16, pool_input: true },
            mixing_hidden: 128,
            blur_size: 13,
            blur_variance: 1.0,
            seed: 7,
        }
    }

    pub fn reference() -> Self {
        Self {
            backbone: BackboneConfig::reference(),
            head: ScoreHeadConfig { conv1_channels: 256, conv2_channels: 64, hidden: 256, pool_input: false },
            mixing_hidden: 128,
            blur_size: 13,
            blur_variance: 1.0,
            seed: 7,
        }
    }

    pub fn input_resolution(&self) -> usize {
        self.backbone.input_resolution
    }
}

/// Backbone output for a single image, shaped `(C, Hf, Wf)`.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    tensor: Tensor,
}

impl FeatureMap {
    pub fn new(tensor: Tensor) -> Result<Self> {
        tensor.dims3()?;
        Ok(Self { tensor })
    }

    /// `(channels, rows, cols)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.tensor.dims3().expect("feature maps are rank 3")
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn to_vec(&self) -> Result<Vec<f64>> {
        to_f64_vec(&self.tensor)
    }

    /// Sum of all values and sum of squares, a compact fingerprint.
    pub fn checksum(&self) -> Result<(f64, f64)> {
        let v = self.to_vec()?;
        Ok((v.iter().sum(), v.iter().map(|x| x * x).sum()))
    }
}

/// Differentiable outputs for one scene.
#[derive(Debug, Clone)]
pub struct SceneOutput {
    /// `(k, 2)`: aesthetic and content score per counterfactual.
    pub element_scores: Tensor,
    /// `(k, 2)`: softmax weights, column 0 for aesthetics.
    pub weights: Tensor,
    /// `(2,)`: weighted scene scores.
    pub overall: Tensor,
}

#[derive(Debug, Clone)]
struct ScoreHead {
    conv1: Conv2d,
    conv2: Conv2d,
    aes: (Linear, Linear),
    content: (Linear, Linear),
    input: (usize, usize, usize),
    pool_input: bool,
}

impl ScoreHead {
    fn new(store: &mut ParamStore, seed: u64, input: (usize, usize, usize), cfg: &ScoreHeadConfig) -> Result<Self> {
        let mut r = rng(seed);
        let (c, h, w) = input;
        let (h, w) = if cfg.pool_input { (1, 1) } else { (h, w) };
        let conv1 = Conv2d::new(store, "conv1", &mut r, c, cfg.conv1_channels, 3, 1, 1)?;
        let conv2 = Conv2d::new(store, "conv2", &mut r, cfg.conv1_channels, cfg.conv2_channels, 3, 2, 1)?;
        let flat = cfg.conv2_channels * h.div_ceil(2) * w.div_ceil(2);
        let aes = (
            Linear::new(store, "aes.fc1", &mut r, flat, cfg.hidden)?,
            Linear::new(store, "aes.fc2", &mut r, cfg.hidden, 1)?,
        );
        let content = (
            Linear::new(store, "content.fc1", &mut r, flat, cfg.hidden)?,
            Linear::new(store, "content.fc2", &mut r, cfg.hidden, 1)?,
        );
        Ok(Self { conv1, conv2, aes, content, input, pool_input: cfg.pool_input })
    }

    /// `(N, C, Hf, Wf)` to `(N, 2)`.
    fn forward(&self, feats: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = feats.dims4()?;
        if (c, h, w) != self.input {
            return Err(Error::invalid(format!(
                "score head expects {:?} features, got {:?}",
                self.input,
                (c, h, w)
            )));
        }
        let x = if self.pool_input { feats.mean_keepdim(3)?.mean_keepdim(2)? } else { feats.clone() };
        let x = self.conv1.forward(&x)?.relu()?;
        let x = self.conv2.forward(&x)?.relu()?;
        let x = x.flatten_from(1)?;
        let aes = self.aes.1.forward(&self.aes.0.forward(&x)?.relu()?)?;
        let content = self.content.1.forward(&self.content.0.forward(&x)?.relu()?)?;
        Ok(Tensor::cat(&[aes, content], 1)?)
    }
}

#[derive(Debug, Clone)]
struct MixingNet {
    fc1: Linear,
    fc2: Linear,
}

impl MixingNet {
    /// `orig`: `(C, Hf*Wf)` original-image features; `region`: `(k, Hf*Wf)`
    /// row-normalized pooling weights. Returns `(k, 2)` logits.
    fn logits(&self, orig: &Tensor, region: &Tensor) -> Result<Tensor> {
        let k = region.dim(0)?;
        let channels = orig.dim(0)?;
        let global = orig.mean_keepdim(1)?.t()?.broadcast_as((k, channels))?;
        let local = region.matmul(&orig.t()?)?;
        let x = Tensor::cat(&[global, local], 1)?;
        self.fc2.forward(&self.fc1.forward(&x)?.relu()?)
    }
}

/// The complete scoring model: frozen backbone, trainable score head and
/// trainable mixing network.
#[derive(Debug, Clone)]
pub struct ScoreModel {
    config: ScoreModelConfig,
    backbone: Backbone,
    score_store: ParamStore,
    mixing_store: ParamStore,
    head: ScoreHead,
    mixing: MixingNet,
    kernel: GaussianKernel,
}

/// The parameter bundle is the model itself.
pub type ScoreModelParams = ScoreModel;

impl ScoreModel {
    pub fn new(config: ScoreModelConfig, dtype: DType) -> Result<Self> {
        let backbone = Backbone::new(config.backbone.clone(), dtype)?;
        Self::with_backbone(config, backbone)
    }

    fn with_backbone(config: ScoreModelConfig, backbone: Backbone) -> Result<Self> {
        let dtype = backbone.params().dtype();
        let kernel = GaussianKernel::new(config.blur_size, config.blur_variance)?;
        let feat = backbone.output_dims();
        let mut score_store = ParamStore::new("score", dtype);
        let head = ScoreHead::new(&mut score_store, config.seed, feat, &config.head)?;
        let mut mixing_store = ParamStore::new("mix", dtype);
        let mut r = rng(config.seed.wrapping_add(1));
        let mixing = MixingNet {
            fc1: Linear::new(&mut mixing_store, "fc1", &mut r, 2 * feat.0, config.mixing_hidden)?,
            fc2: Linear::new(&mut mixing_store, "fc2", &mut r, config.mixing_hidden, 2)?,
        };
        Ok(Self { config, backbone, score_store, mixing_store, head, mixing, kernel })
    }

    pub fn config(&self) -> &ScoreModelConfig {
        &self.config
    }

    pub fn dtype(&self) -> DType {
        self.score_store.dtype()
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn input_resolution(&self) -> usize {
        self.config.input_resolution()
    }

    /// Trainable score-head parameters.
    pub fn score_params(&self) -> &ParamStore {
        &self.score_store
    }

    /// Trainable mixing-network parameters.
    pub fn mixing_params(&self) -> &ParamStore {
        &self.mixing_store
    }

    /// Features of an image already at the model's input resolution.
    pub fn extract_features(&self, image: &ImageTensor) -> Result<FeatureMap> {
        let r = self.input_resolution();
        if image.dims() != (r, r) {
            return Err(Error::invalid(format!(
                "feature extraction expects {r}x{r} input, got {}x{}",
                image.height(),
                image.width()
            )));
        }
        let t = self.extract_batch(&[image])?;
        FeatureMap::new(t.get(0)?)
    }

    /// `(N, C, Hf, Wf)` features for a batch of input-resolution images.
    pub fn extract_batch(&self, images: &[&ImageTensor]) -> Result<Tensor> {
        let x = images_to_tensor(images, self.dtype())?;
        self.backbone.forward(&x)
    }

    pub fn score_element(&self, features: &FeatureMap) -> Result<ElementScores> {
        let out = to_f64_vec(&self.score_batch(&features.tensor().unsqueeze(0)?)?)?;
        Ok(ElementScores::new(out[0], out[1]))
    }

    /// `(N, C, Hf, Wf)` features to `(N, 2)` scores.
    pub fn score_batch(&self, features: &Tensor) -> Result<Tensor> {
        self.head.forward(features)
    }

    /// Per-element pooling weights over the feature grid, shaped
    /// `(k, Hf*Wf)` with rows summing to 1. Cells are weighted by how much
    /// of them each mask covers.
    pub fn region_weights(&self, masks: &MaskSet) -> Result<Tensor> {
        let (_, fh, fw) = self.backbone.output_dims();
        let mut data = Vec::with_capacity(masks.len() * fh * fw);
        for element in masks {
            let cov = element.mask.coverage(fh, fw);
            let total: f64 = cov.sum();
            if total > 0.0 {
                data.extend(cov.iter().map(|v| v / total));
            } else {
                data.extend(std::iter::repeat(1.0 / (fh * fw) as f64).take(fh * fw));
            }
        }
        Ok(Tensor::from_vec(data, (masks.len(), fh * fw), &Device::Cpu)?.to_dtype(self.dtype())?)
    }

    /// `(k, 2)` mixing logits from original-image features `(C, Hf, Wf)`.
    pub fn mixing_logits_tensor(&self, original: &Tensor, region: &Tensor) -> Result<Tensor> {
        let (c, h, w) = original.dims3()?;
        self.mixing.logits(&original.reshape((c, h * w))?, region)
    }

    /// Resizes the image to the input resolution.
    pub fn prepare_image(&self, image: &ImageTensor) -> Result<ImageTensor> {
        let r = self.input_resolution();
        if image.dims() == (r, r) {
            return Ok(image.clone());
        }
        Ok(image.resize(r, r)?)
    }

    /// Separate `(beta, gamma)` logits for each element.
    pub fn mixing_logits(&self, image: &ImageTensor, masks: &MaskSet) -> Result<(Vec<f64>, Vec<f64>)> {
        if masks.is_empty() {
            return Err(Error::EmptyScene);
        }
        let features = self.extract_features(&self.prepare_image(image)?)?;
        let logits = self.mixing_logits_tensor(features.tensor(), &self.region_weights(masks)?)?;
        let flat = to_f64_vec(&logits)?;
        Ok((flat.iter().step_by(2).copied().collect(), flat.iter().skip(1).step_by(2).copied().collect()))
    }

    pub fn mixing_weights(&self, image: &ImageTensor, masks: &MaskSet) -> Result<MixingWeights> {
        let (beta, gamma) = self.mixing_logits(image, masks)?;
        Ok(weights_from_logits(&beta, &gamma)?)
    }

    /// Counterfactual sub-images at the input resolution, one per element.
    pub fn counterfactuals(&self, image: &ImageTensor, masks: &MaskSet) -> Result<Vec<ImageTensor>> {
        let r = self.input_resolution();
        let resized = self.prepare_image(image)?;
        let small = masks.resize(r, r);
        small.iter().map(|m| Ok(blur_element(&resized, m, &self.kernel)?)).collect()
    }

    /// Differentiable forward pass over one scene's precomputed features:
    /// `original` is `(1 or none, C, Hf, Wf)`, `subs` is `(k, C, Hf, Wf)`
    /// and `region` is `(k, Hf*Wf)`.
    pub fn scene_forward(&self, original: &Tensor, subs: &Tensor, region: &Tensor) -> Result<SceneOutput> {
        let original = if original.rank() == 4 { original.squeeze(0)? } else { original.clone() };
        if subs.dim(0)? == 0 {
            return Err(Error::EmptyScene);
        }
        let element_scores = self.score_batch(subs)?;
        let logits = self.mixing_logits_tensor(&original, region)?;
        let weights = candle_nn::ops::softmax(&logits, 0)?;
        let overall = (&element_scores * &weights)?.sum(0)?;
        Ok(SceneOutput { element_scores, weights, overall })
    }

    /// Full inference: segment masks in, scene assessment out.
    pub fn analyze_scene(&self, image: &ImageTensor, masks: &MaskSet) -> Result<SceneAssessment> {
        if masks.is_empty() {
            return Err(Error::EmptyScene);
        }
        let subs = self.counterfactuals(image, masks)?;
        let refs: Vec<&ImageTensor> = subs.iter().collect();
        let raw = to_f64_vec(&self.score_batch(&self.extract_batch(&refs)?)?)?;
        let scores = raw.chunks_exact(2).map(|s| ElementScores::new(s[0], s[1])).collect();
        let weights = self.mixing_weights(image, masks)?;
        Ok(SceneAssessment::from_parts(scores, weights)?)
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "backbone_hash": self.backbone.hash(),
            "input_resolution": self.input_resolution(),
            "taxonomy_version": TAXONOMY_VERSION,
        })
    }

    /// Trainable parameters plus enough metadata to rebuild and verify the
    /// frozen backbone.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = self.score_store.snapshot();
        tensors.extend(self.mixing_store.snapshot());
        Checkpoint::new(CHECKPOINT_KIND, self.metadata(), tensors)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let config: ScoreModelConfig = serde_json::from_value(ck.metadata["config"].clone())?;
        let taxonomy = ck.metadata["taxonomy_version"].as_str().unwrap_or_default();
        if taxonomy != TAXONOMY_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint label taxonomy {taxonomy:?} does not match {TAXONOMY_VERSION:?}"
            )));
        }
        let dtype = ck.tensors.first().map_or(DType::F32, |(_, t)| t.dtype());
        let model = Self::new(config, dtype)?;
        let expected = ck.metadata["backbone_hash"].as_str().unwrap_or_default();
        if expected != model.backbone.hash() {
            return Err(Error::Checkpoint("backbone weights do not match the checkpoint's hash".into()));
        }
        model.score_store.load(&ck.tensors)?;
        model.mixing_store.load(&ck.tensors)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// `lambda_aes * MSE(aes) + MSE(content)` over `(N, 2)` predictions and
/// labels, as a differentiable scalar.
pub fn total_loss_tensor(predictions: &Tensor, labels: &Tensor, lambda_aes: f64) -> Result<Tensor> {
    if predictions.dims() != labels.dims() || predictions.rank() != 2 || predictions.dim(1)? != 2 {
        return Err(Error::invalid(format!(
            "predictions {:?} and labels {:?} must both be (N, 2)",
            predictions.dims(),
            labels.dims()
        )));
    }
    let mse = (predictions - labels)?.sqr()?.mean(0)?;
    let scale = Tensor::new(&[lambda_aes, 1.0], &Device::Cpu)?.to_dtype(predictions.dtype())?;
    Ok((mse * scale)?.sum(D::Minus1)?)
}
