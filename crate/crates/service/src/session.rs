//! Session state, its on-disk record and the JSON views sent to clients.

use chrono::{DateTime, Utc};
use declutter_core::rle::CocoRle;
use declutter_core::segmentation::LabelTaxonomy;
use declutter_core::{effective_categories, Category, ElementMask, ImageTensor, MaskSet, OverrideLedger, SceneAssessment, Suggestion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::Analysis;

pub const SESSION_FORMAT: &str = "declutter-session/1";

/// One element as stored: the mask travels as COCO run-length counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredElement {
    pub index: usize,
    pub label: u32,
    pub mask: CocoRle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CleanStatus {
    Cleaned,
    NothingToRemove,
}

/// Summary of the most recent clean; the images themselves are stored as
/// `preview.png` and `confidence.png` next to the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanRecord {
    pub status: CleanStatus,
    pub removed: Vec<usize>,
    pub iterations_used: usize,
    pub accepted_per_iteration: Vec<usize>,
    pub has_confidence: bool,
    pub cleaned_at: DateTime<Utc>,
}

/// Contents of `session.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub format: String,
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub width: usize,
    pub height: usize,
    pub elements: Vec<StoredElement>,
    pub assessment: Option<SceneAssessment>,
    pub ledger: OverrideLedger,
    pub last_clean: Option<CleanRecord>,
}

/// A live session: the stored record plus the decoded image and masks.
#[derive(Debug, Clone)]
pub struct Session {
    pub record: SessionRecord,
    pub image: ImageTensor,
    pub masks: MaskSet,
}

impl Session {
    pub fn new(id: String, image: ImageTensor, analysis: Analysis) -> Self {
        let now = Utc::now();
        let (height, width) = image.dims();
        let elements = analysis
            .masks
            .iter()
            .map(|e| StoredElement { index: e.index, label: e.label, mask: CocoRle::encode(&e.mask) })
            .collect();
        Self {
            record: SessionRecord {
                format: SESSION_FORMAT.to_owned(),
                id,
                created_at: now,
                updated_at: now,
                width,
                height,
                elements,
                assessment: analysis.assessment,
                ledger: OverrideLedger::new(),
                last_clean: None,
            },
            image,
            masks: analysis.masks,
        }
    }

    /// Rebuilds a session from its record and original image, checking
    /// that the two agree.
    pub fn from_parts(record: SessionRecord, image: ImageTensor) -> Result<Self> {
        if record.format != SESSION_FORMAT {
            return Err(Error::Internal(format!("unsupported session format {:?}", record.format)));
        }
        let dims = (record.height, record.width);
        if image.dims() != dims {
            return Err(Error::Internal(format!("session {} image does not match its record", record.id)));
        }
        let elements = record
            .elements
            .iter()
            .map(|e| Ok(ElementMask::new(e.index, e.label, e.mask.decode()?)))
            .collect::<Result<Vec<_>>>()?;
        let masks = MaskSet::from_elements(dims, elements)?;
        if record.assessment.as_ref().map_or(0, SceneAssessment::len) != masks.len() {
            return Err(Error::Internal(format!("session {} assessment does not match its masks", record.id)));
        }
        Ok(Self { record, image, masks })
    }

    pub fn id(&self) -> &str {
        &self.record.id
    }

    pub fn k(&self) -> usize {
        self.masks.len()
    }

    pub fn analysis(&self) -> Analysis {
        Analysis { masks: self.masks.clone(), assessment: self.record.assessment.clone() }
    }

    pub fn effective_categories(&self) -> Result<Vec<Category>> {
        match &self.record.assessment {
            Some(a) => Ok(effective_categories(a, &self.record.ledger)?),
            None => Ok(Vec::new()),
        }
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        if index == 0 || index > self.k() {
            return Err(Error::BadRequest(format!("element index {index} out of range 1..={}", self.k())));
        }
        Ok(())
    }

    pub fn view(&self) -> Result<SessionView> {
        let taxonomy = LabelTaxonomy::default();
        let categories = self.effective_categories()?;
        let elements = match &self.record.assessment {
            None => Vec::new(),
            Some(a) => self
                .masks
                .iter()
                .zip(&self.record.elements)
                .enumerate()
                .map(|(i, (element, stored))| {
                    let (top, left, bottom, right) = element.mask.bounding_box().unwrap_or_default();
                    ElementView {
                        index: element.index,
                        label: element.label,
                        label_name: taxonomy.name(element.label).map(str::to_owned),
                        bbox: BoundingBox { top, left, height: bottom + 1 - top, width: right + 1 - left },
                        area_fraction: element.area_fraction(),
                        category: categories[i],
                        predicted_category: a.categories[i],
                        q: a.contributions[i],
                        aes: a.element_scores[i].aes,
                        content: a.element_scores[i].content,
                        beta: a.weights.beta[i],
                        gamma: a.weights.gamma[i],
                        mask: stored.mask.clone(),
                    }
                })
                .collect(),
        };
        Ok(SessionView {
            id: self.record.id.clone(),
            width: self.record.width,
            height: self.record.height,
            k: self.k(),
            overall: self
                .record
                .assessment
                .as_ref()
                .map(|a| OverallScores { aes: a.overall_aes, content: a.overall_content }),
            elements,
            overrides: self
                .record
                .ledger
                .entries()
                .map(|(index, e)| OverrideView { index, category: e.category, recorded_at: e.recorded_at })
                .collect(),
            last_clean: self.record.last_clean.as_ref().map(|c| CleanView::new(&self.record.id, c)),
            created_at: self.record.created_at,
            updated_at: self.record.updated_at,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementView {
    pub index: usize,
    pub label: u32,
    pub label_name: Option<String>,
    pub bbox: BoundingBox,
    pub area_fraction: f64,
    /// Category after user overrides.
    pub category: Category,
    /// Category from the sign of `q` alone.
    pub predicted_category: Category,
    pub q: f64,
    pub aes: f64,
    pub content: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mask: CocoRle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverallScores {
    pub aes: f64,
    pub content: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideView {
    pub index: usize,
    pub category: Category,
    pub recorded_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanView {
    pub status: CleanStatus,
    pub removed: Vec<usize>,
    pub iterations_used: usize,
    pub accepted_per_iteration: Vec<usize>,
    pub preview_url: String,
    pub confidence_url: Option<String>,
    pub cleaned_at: DateTime<Utc>,
}

impl CleanView {
    pub fn new(id: &str, record: &CleanRecord) -> Self {
        Self {
            status: record.status,
            removed: record.removed.clone(),
            iterations_used: record.iterations_used,
            accepted_per_iteration: record.accepted_per_iteration.clone(),
            preview_url: format!("/v1/sessions/{id}/preview.png"),
            confidence_url: record.has_confidence.then(|| format!("/v1/sessions/{id}/confidence.png")),
            cleaned_at: record.cleaned_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub k: usize,
    pub overall: Option<OverallScores>,
    pub elements: Vec<ElementView>,
    pub overrides: Vec<OverrideView>,
    pub last_clean: Option<CleanView>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionsView {
    pub index: usize,
    pub category: Category,
    pub suggestions: Vec<Suggestion>,
}
