//! The analyze and clean steps shared by the HTTP service and the CLI.

use std::sync::Arc;

use candle_core::DType;
use declutter_core::segmentation::Segmenter;
use declutter_core::{select_clutter, BinaryMask, ImageTensor, MaskSet, OverrideLedger, SceneAssessment, SuggestionPolicy};
use declutter_models::{
    iterative_inpaint, ConfidenceMap, InpaintModel, InpaintModelConfig, InpaintOptions, Inpainter, ScoreModel,
    ScoreModelConfig,
};

use crate::config::ServiceConfig;
use crate::error::{Error, Result};

/// Models, segmenter and policy knobs. Shared read-only between requests.
#[derive(Clone)]
pub struct Pipeline {
    pub score_model: Arc<ScoreModel>,
    pub inpainter: Arc<dyn Inpainter>,
    pub segmenter: Arc<dyn Segmenter>,
    pub policy: SuggestionPolicy,
    pub inpaint_options: InpaintOptions,
    pub max_image_side: usize,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub masks: MaskSet,
    /// `None` when the segmenter found no elements.
    pub assessment: Option<SceneAssessment>,
}

#[derive(Debug, Clone)]
pub struct CleanOutcome {
    /// 1-based indices of the removed elements.
    pub removed: Vec<usize>,
    pub union_mask: BinaryMask,
    pub image: ImageTensor,
    pub iterations_used: usize,
    /// Pixels accepted in each iteration.
    pub accepted_per_iteration: Vec<usize>,
    pub confidence: Option<ConfidenceMap>,
}

impl Pipeline {
    /// Loads the configured checkpoints, or the pinned tiny models when no
    /// checkpoint is given.
    pub fn from_config(config: &ServiceConfig) -> Result<Self> {
        let score_model = match &config.score_checkpoint {
            Some(path) => ScoreModel::load(path)?,
            None => ScoreModel::new(ScoreModelConfig::tiny(), DType::F32)?,
        };
        let inpainter = match &config.inpaint_checkpoint {
            Some(path) => InpaintModel::load(path)?,
            None => InpaintModel::new(InpaintModelConfig::tiny(), DType::F32)?,
        };
        let segmenter: Arc<dyn Segmenter> = Arc::from(config.segmentation.build(config.mask_filter));
        Ok(Self {
            score_model: Arc::new(score_model),
            inpainter: Arc::new(inpainter),
            segmenter,
            policy: config.policy()?,
            inpaint_options: config.inpaint_options(),
            max_image_side: config.max_image_side,
        })
    }

    pub fn decode_image(&self, bytes: &[u8]) -> Result<ImageTensor> {
        let image = ImageTensor::decode(bytes)?;
        let (h, w) = image.dims();
        if h.max(w) > self.max_image_side {
            return Err(Error::BadRequest(format!(
                "image is {w}x{h}; the longer side may be at most {}",
                self.max_image_side
            )));
        }
        Ok(image)
    }

    pub fn analyze(&self, image: &ImageTensor) -> Result<Analysis> {
        let masks = self.segmenter.segment(image)?;
        let assessment = if masks.is_empty() { None } else { Some(self.score_model.analyze_scene(image, &masks)?) };
        Ok(Analysis { masks, assessment })
    }

    /// Removes the effective clutter of `analysis`, always starting from
    /// `image` itself.
    pub fn clean(&self, image: &ImageTensor, analysis: &Analysis, ledger: &OverrideLedger) -> Result<CleanOutcome> {
        let (h, w) = image.dims();
        let selection = match &analysis.assessment {
            Some(a) => select_clutter(a, ledger, &analysis.masks)?,
            None => {
                if !ledger.is_empty() {
                    return Err(Error::BadRequest("overrides recorded for a scene without elements".into()));
                }
                declutter_core::ClutterSelection { indices: Vec::new(), union_mask: BinaryMask::zeros(h, w) }
            }
        };
        if selection.is_empty() {
            return Ok(CleanOutcome {
                removed: Vec::new(),
                union_mask: selection.union_mask,
                image: image.clone(),
                iterations_used: 0,
                accepted_per_iteration: Vec::new(),
                confidence: None,
            });
        }
        let result = iterative_inpaint(image, &selection.union_mask, self.inpainter.as_ref(), &self.inpaint_options)?;
        Ok(CleanOutcome {
            removed: selection.indices,
            union_mask: selection.union_mask,
            iterations_used: result.iterations_used,
            accepted_per_iteration: result.per_iteration.iter().map(|it| it.accepted.count()).collect(),
            confidence: result.last_confidence().cloned(),
            image: result.final_image,
        })
    }
}
