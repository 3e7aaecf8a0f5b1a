//! Score-model manifests.
//!
//! A manifest is a CSV file with a header. The `image_path` column is
//! required; labels come either from `y_aes` / `y_content` columns or, for
//! per-rater manifests, from any number of `y_aes_*` / `y_content_*`
//! columns that are averaged per row. Relative paths are resolved against
//! the manifest's directory.

use std::path::{Path, PathBuf};

use declutter_core::{ImageTensor, MaskSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDatasetRecord {
    pub image_ref: PathBuf,
    pub y_aes: f64,
    pub y_content: f64,
}

/// A record whose image could not be read.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordIoError {
    pub line: u64,
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestReport {
    pub records: Vec<ScoreDatasetRecord>,
    pub io_errors: Vec<RecordIoError>,
}

/// Column positions of one label kind.
fn label_columns(headers: &csv::StringRecord, name: &str) -> Vec<usize> {
    let exact: Vec<usize> = headers.iter().enumerate().filter(|(_, h)| *h == name).map(|(i, _)| i).collect();
    if !exact.is_empty() {
        return exact;
    }
    let prefix = format!("{name}_");
    headers.iter().enumerate().filter(|(_, h)| h.starts_with(&prefix)).map(|(i, _)| i).collect()
}

fn min_max_normalize(values: &mut [f64]) {
    if values.iter().all(|v| (0.0..=1.0).contains(v)) {
        return;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for v in values {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.5 };
    }
}

/// Reads a manifest. Malformed rows abort with their line number; records
/// whose image cannot be opened are collected in the report instead.
pub fn ingest_score_dataset(manifest: impl AsRef<Path>) -> Result<IngestReport> {
    let manifest = manifest.as_ref();
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(manifest).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line: 1, message: format!("{other:?}") },
    })?;
    let headers = reader.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    let path_col = headers
        .iter()
        .position(|h| h == "image_path")
        .ok_or(Error::Parse { line: 1, message: "missing image_path column".into() })?;
    let aes_cols = label_columns(&headers, "y_aes");
    let content_cols = label_columns(&headers, "y_content");
    if aes_cols.is_empty() || content_cols.is_empty() {
        return Err(Error::Parse { line: 1, message: "missing y_aes or y_content columns".into() });
    }

    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let mean = |cols: &[usize], name: &str| -> Result<f64> {
            let mut sum = 0.0;
            for &c in cols {
                let raw = row.get(c).unwrap_or_default();
                let v: f64 = raw
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| Error::Parse { line, message: format!("{name}: {raw:?} is not a number") })?;
                sum += v;
            }
            Ok(sum / cols.len() as f64)
        };
        let raw_path = row.get(path_col).unwrap_or_default();
        if raw_path.is_empty() {
            return Err(Error::Parse { line, message: "empty image_path".into() });
        }
        let path = base.join(raw_path);
        rows.push((line, path, mean(&aes_cols, "y_aes")?, mean(&content_cols, "y_content")?));
    }

    let mut aes: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let mut content: Vec<f64> = rows.iter().map(|r| r.3).collect();
    min_max_normalize(&mut aes);
    min_max_normalize(&mut content);

    let mut report = IngestReport::default();
    for (i, (line, path, _, _)) in rows.into_iter().enumerate() {
        match ImageTensor::open(&path) {
            Ok(_) => report.records.push(ScoreDatasetRecord { image_ref: path, y_aes: aes[i], y_content: content[i] }),
            Err(e) => report.io_errors.push(RecordIoError { line, path, message: e.to_string() }),
        }
    }
    Ok(report)
}

/// One training example for the score model.
#[derive(Debug, Clone)]
pub struct ScoreSample {
    pub image: ImageTensor,
    /// Element masks; when absent the training segmenter provides them.
    pub masks: Option<MaskSet>,
    pub y_aes: f64,
    pub y_content: f64,
}

impl ScoreSample {
    pub fn load(record: &ScoreDatasetRecord) -> Result<Self> {
        Ok(Self {
            image: ImageTensor::open(&record.image_ref)?,
            masks: None,
            y_aes: record.y_aes,
            y_content: record.y_content,
        })
    }
}
