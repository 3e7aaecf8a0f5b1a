//! Pixel, mask and scene-level primitives for the declutter toolkit.
//!
//! Everything in this crate is a pure function of its inputs. The neural
//! networks that produce element scores and inpainted pixels live in
//! `declutter-models`; this crate holds the data they exchange and the
//! arithmetic that turns scores into clutter decisions.

pub mod assessment;
pub mod compose;
pub mod error;
pub mod image;
pub mod kernel;
pub mod mask;
pub mod policy;
pub mod rle;
pub mod segmentation;

pub use crate::assessment::{
    aggregate_scores, contributions, softmax, total_loss, weights_from_logits, Category,
    ElementScores, MixingWeights, SceneAssessment,
};
pub use crate::compose::{apply_mask_complement, composite};
pub use crate::error::{Error, Result};
pub use crate::image::ImageTensor;
pub use crate::kernel::{blur_element, GaussianKernel};
pub use crate::mask::{BinaryMask, ElementMask, MaskSet};
pub use crate::policy::{
    effective_categories, select_clutter, suggest, ClutterSelection, OverrideLedger, Suggestion,
    SuggestionKind, SuggestionPolicy,
};
