//! User overrides, removal suggestions and clutter-selection masks.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::assessment::{Category, SceneAssessment};
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, ElementMask, MaskSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideEntry {
    pub category: Category,
    pub recorded_at: DateTime<Utc>,
}

/// User-forced categories keyed by 1-based element index. Recording an
/// index again replaces the previous entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OverrideLedger {
    entries: BTreeMap<usize, OverrideEntry>,
}

impl OverrideLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, index: usize, category: Category) {
        self.record_at(index, category, Utc::now());
    }

    pub fn record_at(&mut self, index: usize, category: Category, at: DateTime<Utc>) {
        self.entries.insert(index, OverrideEntry { category, recorded_at: at });
    }

    pub fn get(&self, index: usize) -> Option<Category> {
        self.entries.get(&index).map(|e| e.category)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, &OverrideEntry)> {
        self.entries.iter().map(|(&i, e)| (i, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// Model categories with ledger entries taking precedence.
pub fn effective_categories(
    assessment: &SceneAssessment,
    ledger: &OverrideLedger,
) -> Result<Vec<Category>> {
    let k = assessment.categories.len();
    if let Some((bad, _)) = ledger.entries().find(|&(i, _)| i == 0 || i > k) {
        return Err(Error::invalid(format!("override for unknown element {bad} (k = {k})")));
    }
    Ok(assessment
        .categories
        .iter()
        .enumerate()
        .map(|(i, &c)| ledger.get(i + 1).unwrap_or(c))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuggestionPolicy {
    /// Area fraction below which conventional tricks are offered.
    pub area_threshold: f64,
    /// Boundary margin as a fraction of `min(H, W)`.
    pub boundary_margin: f64,
}

impl Default for SuggestionPolicy {
    fn default() -> Self {
        Self { area_threshold: 0.05, boundary_margin: 0.10 }
    }
}

impl SuggestionPolicy {
    pub fn new(area_threshold: f64, boundary_margin: f64) -> Result<Self> {
        let policy = Self { area_threshold, boundary_margin };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("area_threshold", self.area_threshold), ("boundary_margin", self.boundary_margin)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }

    pub fn margin_pixels(&self, dims: (usize, usize)) -> usize {
        (self.boundary_margin * dims.0.min(dims.1) as f64).floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuggestionKind {
    ZoomIn,
    RepositionCamera,
    ChangeOrientation,
    Inpaint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub kind: SuggestionKind,
    pub rationale: String,
}

impl Suggestion {
    fn new(kind: SuggestionKind, rationale: &str) -> Self {
        Self { kind, rationale: rationale.to_owned() }
    }
}

/// Removal suggestions for one element. Normal elements get none; clutter
/// always gets inpainting, plus the conventional camera tricks when the
/// element is small and near the frame edge.
pub fn suggest(element: &ElementMask, category: Category, policy: &SuggestionPolicy) -> Vec<Suggestion> {
    if category == Category::Normal {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(4);
    let margin = policy.margin_pixels(element.mask.dims());
    if element.touches_boundary(margin) && element.area_fraction() < policy.area_threshold {
        out.push(Suggestion::new(SuggestionKind::ZoomIn, "zoom in to crop the element out of the frame"));
        out.push(Suggestion::new(
            SuggestionKind::RepositionCamera,
            "move the camera so the element leaves the frame",
        ));
        out.push(Suggestion::new(
            SuggestionKind::ChangeOrientation,
            "switch between portrait and landscape to exclude the element",
        ));
    }
    out.push(Suggestion::new(SuggestionKind::Inpaint, "remove the element with the clean tool"));
    out
}

/// The elements chosen for removal and the union of their masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClutterSelection {
    pub indices: Vec<usize>,
    pub union_mask: BinaryMask,
}

impl ClutterSelection {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn select_clutter(
    assessment: &SceneAssessment,
    ledger: &OverrideLedger,
    masks: &MaskSet,
) -> Result<ClutterSelection> {
    if masks.len() != assessment.len() {
        return Err(Error::invalid(format!(
            "{} masks but {} assessed elements",
            masks.len(),
            assessment.len()
        )));
    }
    let categories = effective_categories(assessment, ledger)?;
    let (h, w) = masks.dims();
    let mut union_mask = BinaryMask::zeros(h, w);
    let mut indices = Vec::new();
    for (element, category) in masks.iter().zip(categories) {
        if category == Category::Clutter {
            indices.push(element.index);
            union_mask = union_mask.or(&element.mask)?;
        }
    }
    Ok(ClutterSelection { indices, union_mask })
}
