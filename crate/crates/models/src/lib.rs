//! Neural components of the declutter toolkit: the counterfactual
//! contribution scorer and the confidence-gated inpainting generator,
//! both built on candle and running on the CPU.

pub mod backbone;
pub mod checkpoint;
pub mod contribution;
pub mod error;
pub mod inpaint;
pub mod nn;

pub use crate::backbone::{Backbone, BackboneConfig, ConvStage};
pub use crate::checkpoint::Checkpoint;
pub use crate::contribution::{
    total_loss_tensor, FeatureMap, SceneOutput, ScoreHeadConfig, ScoreModel, ScoreModelConfig,
    ScoreModelParams,
};
pub use crate::error::{Error, Result};
pub use crate::inpaint::{
    iterative_inpaint, ConfidenceMap, Critic, Discriminator, Generator, InpaintModel, InpaintModelConfig,
    InpaintOptions, InpaintResult, Inpainter,
};
pub use crate::nn::ParamStore;
