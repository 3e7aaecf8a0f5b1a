use chrono::Utc;
use declutter_core::{suggest, Category};
use uuid::Uuid;

use crate::config::ServiceConfig;
use crate::error::{Error, Result};
use crate::pipeline::Pipeline;
use crate::session::{CleanRecord, CleanStatus, CleanView, Session, SessionView, SuggestionsView};
use crate::store::{SessionStore, CONFIDENCE, PREVIEW};

/// Synchronous session operations. The HTTP layer adds per-session locking
/// and moves each call onto a blocking worker.
pub struct Service {
    pipeline: Pipeline,
    store: SessionStore,
}

impl Service {
    pub fn new(pipeline: Pipeline, store: SessionStore) -> Self {
        Self { pipeline, store }
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self::new(Pipeline::from_config(config)?, SessionStore::open(&config.store_path)?))
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    /// Decodes, segments and scores an upload, then persists it under a
    /// fresh id.
    pub fn create_session(&self, upload: &[u8]) -> Result<SessionView> {
        let image = self.pipeline.decode_image(upload)?;
        let analysis = self.pipeline.analyze(&image)?;
        let session = Session::new(Uuid::new_v4().simple().to_string(), image, analysis);
        self.store.create(&session)?;
        log::info!("created session {} with {} elements", session.id(), session.k());
        session.view()
    }

    pub fn session(&self, id: &str) -> Result<SessionView> {
        self.store.load(id)?.view()
    }

    /// Forces the category of element `index` (1-based). Re-sending the
    /// current override changes nothing.
    pub fn set_override(&self, id: &str, index: usize, category: Category) -> Result<SessionView> {
        let mut session = self.store.load(id)?;
        session.check_index(index)?;
        if session.record.ledger.get(index) != Some(category) {
            session.record.ledger.record(index, category);
            session.record.updated_at = Utc::now();
            self.store.save(&session)?;
        }
        session.view()
    }

    /// Inpaints the effective clutter, starting from the stored original
    /// every time.
    pub fn clean(&self, id: &str) -> Result<CleanView> {
        let mut session = self.store.load(id)?;
        let outcome = self.pipeline.clean(&session.image, &session.analysis(), &session.record.ledger)?;
        self.store.write_blob(id, PREVIEW, &outcome.image.encode_png()?)?;
        match &outcome.confidence {
            Some(map) => self.store.write_blob(id, CONFIDENCE, &map.encode_png()?)?,
            None => self.store.remove_blob(id, CONFIDENCE)?,
        }
        let now = Utc::now();
        let record = CleanRecord {
            status: if outcome.removed.is_empty() { CleanStatus::NothingToRemove } else { CleanStatus::Cleaned },
            removed: outcome.removed,
            iterations_used: outcome.iterations_used,
            accepted_per_iteration: outcome.accepted_per_iteration,
            has_confidence: outcome.confidence.is_some(),
            cleaned_at: now,
        };
        let view = CleanView::new(id, &record);
        session.record.last_clean = Some(record);
        session.record.updated_at = now;
        self.store.save(&session)?;
        Ok(view)
    }

    /// Removal suggestions for one element; empty unless it is clutter.
    pub fn suggestions(&self, id: &str, index: usize) -> Result<SuggestionsView> {
        let session = self.store.load(id)?;
        session.check_index(index)?;
        let category = session.effective_categories()?[index - 1];
        let element = session.masks.get(index).ok_or_else(|| Error::Internal(format!("element {index} missing")))?;
        Ok(SuggestionsView { index, category, suggestions: suggest(element, category, &self.pipeline.policy) })
    }

    pub fn preview_png(&self, id: &str) -> Result<Vec<u8>> {
        self.blob(id, PREVIEW, "no preview yet; clean the session first")
    }

    pub fn confidence_png(&self, id: &str) -> Result<Vec<u8>> {
        self.blob(id, CONFIDENCE, "no confidence map; the last clean generated nothing")
    }

    fn blob(&self, id: &str, name: &str, missing: &str) -> Result<Vec<u8>> {
        if !self.store.exists(id) {
            return Err(Error::SessionNotFound(id.to_owned()));
        }
        self.store.read_blob(id, name)?.ok_or_else(|| Error::NotFound(missing.to_owned()))
    }
}
