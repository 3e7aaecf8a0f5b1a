//! Directory-backed session storage.
//!
//! Layout: `<root>/<id>/session.json`, `original.png`, and after a clean
//! `preview.png` plus (when anything was generated) `confidence.png`.
//! Every file is written to a temporary name and renamed into place.

use std::fs;
use std::path::{Path, PathBuf};

use declutter_core::ImageTensor;

use crate::error::{Error, Result};
use crate::session::{Session, SessionRecord};

const RECORD: &str = "session.json";
const ORIGINAL: &str = "original.png";
pub const PREVIEW: &str = "preview.png";
pub const CONFIDENCE: &str = "confidence.png";

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

impl SessionStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> Result<PathBuf> {
        if !valid_id(id) {
            return Err(Error::SessionNotFound(id.to_owned()));
        }
        Ok(self.root.join(id))
    }

    pub fn exists(&self, id: &str) -> bool {
        self.dir(id).map(|d| d.join(RECORD).is_file()).unwrap_or(false)
    }

    /// Writes a new session including its original image.
    pub fn create(&self, session: &Session) -> Result<()> {
        let dir = self.dir(session.id())?;
        if dir.exists() {
            return Err(Error::Internal(format!("session {} already exists", session.id())));
        }
        fs::create_dir_all(&dir)?;
        write_atomic(&dir.join(ORIGINAL), &session.image.encode_png()?)?;
        self.save(session)
    }

    /// Rewrites the session record; the original image is never touched.
    pub fn save(&self, session: &Session) -> Result<()> {
        let dir = self.dir(session.id())?;
        write_atomic(&dir.join(RECORD), &serde_json::to_vec_pretty(&session.record)?)
    }

    pub fn load(&self, id: &str) -> Result<Session> {
        let dir = self.dir(id)?;
        let record_path = dir.join(RECORD);
        if !record_path.is_file() {
            return Err(Error::SessionNotFound(id.to_owned()));
        }
        let record: SessionRecord = serde_json::from_slice(&fs::read(record_path)?)?;
        let image = ImageTensor::decode(&fs::read(dir.join(ORIGINAL))?)
            .map_err(|e| Error::Internal(format!("session {id} original image: {e}")))?;
        Session::from_parts(record, image)
    }

    pub fn write_blob(&self, id: &str, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir(id)?.join(name), bytes)
    }

    pub fn remove_blob(&self, id: &str, name: &str) -> Result<()> {
        match fs::remove_file(self.dir(id)?.join(name)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
            _ => Ok(()),
        }
    }

    pub fn read_blob(&self, id: &str, name: &str) -> Result<Option<Vec<u8>>> {
        let path = self.dir(id)?.join(name);
        match fs::read(path) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Ids of all stored sessions, sorted.
    pub fn list(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if valid_id(&name) && entry.path().join(RECORD).is_file() {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }
}
