//! Instance-mask providers.
//!
//! The toolkit does not ship an instance-segmentation network. Masks come
//! either from an external HTTP backend or from a deterministic synthetic
//! segmenter used by tests, demos and the training harness.

mod external;
mod synthetic;
pub mod taxonomy;

use serde::{Deserialize, Serialize};

pub use external::{ExternalConfig, ExternalSegmenter, WireDetection, WireRle};
pub use synthetic::{PlantedShape, SyntheticMode, SyntheticSegmenter};
pub use taxonomy::{LabelTaxonomy, IRREGULAR_STAIN, LINE_SHAPED_CLUTTER, TAXONOMY_VERSION};

use crate::error::{ensure_dims, Result};
use crate::image::ImageTensor;
use crate::mask::{resolve_overlaps, validate_mask_set, BinaryMask, ElementMask, MaskFilter, MaskSet};

pub trait Segmenter: Send + Sync {
    fn segment(&self, image: &ImageTensor) -> Result<MaskSet>;
}

/// One raw instance before post-processing.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub label: u32,
    pub mask: BinaryMask,
    pub score: f64,
}

/// Post-processing shared by all backends: keep the `max_elements`
/// highest-scoring detections (in their original order), hand contested
/// pixels to the smaller mask, then drop masks under `min_area_fraction`.
pub fn finalize(
    dims: (usize, usize),
    detections: Vec<Detection>,
    filter: &MaskFilter,
) -> Result<MaskSet> {
    for d in &detections {
        ensure_dims("detection mask", dims, d.mask.dims())?;
    }
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score).then(a.cmp(&b)));
    order.truncate(filter.max_elements);
    order.sort_unstable();

    let mut elements: Vec<ElementMask> = order
        .iter()
        .enumerate()
        .map(|(i, &j)| ElementMask::new(i + 1, detections[j].label, detections[j].mask.clone()))
        .collect();
    resolve_overlaps(&mut elements);
    validate_mask_set(elements, dims, filter.min_area_fraction)
}

/// Serializable backend selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SegmenterBackend {
    ExternalModel(ExternalConfig),
    Synthetic(SyntheticMode),
}

impl Default for SegmenterBackend {
    fn default() -> Self {
        SegmenterBackend::Synthetic(SyntheticMode::Foreground { tolerance: 0.08 })
    }
}

impl SegmenterBackend {
    pub fn build(&self, filter: MaskFilter) -> Box<dyn Segmenter> {
        match self {
            SegmenterBackend::ExternalModel(cfg) => Box::new(ExternalSegmenter::new(cfg.clone(), filter)),
            SegmenterBackend::Synthetic(mode) => Box::new(SyntheticSegmenter::new(mode.clone(), filter)),
        }
    }
}

/// Segments `image` with the given backend and the default mask filter.
pub fn segment(image: &ImageTensor, backend: &SegmenterBackend) -> Result<MaskSet> {
    backend.build(MaskFilter::default()).segment(image)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(mask: BinaryMask, score: f64) -> Detection {
        Detection { label: 1, mask, score }
    }

    #[test]
    fn finalize_caps_by_score_and_keeps_order() {
        let dets: Vec<_> = (0..5)
            .map(|i| det(BinaryMask::rect(20, 20, i * 4, 0, 2, 2), [0.1, 0.9, 0.5, 0.8, 0.2][i]))
            .collect();
        let filter = MaskFilter { min_area_fraction: 1e-4, max_elements: 3 };
        let set = finalize((20, 20), dets.clone(), &filter).unwrap();
        let kept: Vec<_> = set.iter().map(|m| m.mask.clone()).collect();
        assert_eq!(kept, vec![dets[1].mask.clone(), dets[2].mask.clone(), dets[3].mask.clone()]);
    }

    #[test]
    fn finalize_drops_masks_swallowed_by_overlap() {
        let small = BinaryMask::rect(10, 10, 0, 0, 2, 2);
        let same = small.clone();
        let filter = MaskFilter { min_area_fraction: 0.01, max_elements: 32 };
        let set = finalize((10, 10), vec![det(small.clone(), 1.0), det(same, 1.0)], &filter).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.get(1).unwrap().mask, small);
    }
}
