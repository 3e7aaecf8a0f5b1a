use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::taxonomy::LabelTaxonomy;
use super::{finalize, Detection, Segmenter};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::mask::{MaskFilter, MaskSet};
use crate::rle::{decode_counts, CocoRle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalConfig {
    /// Endpoint receiving `POST` requests with a PNG body.
    pub url: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    30
}

/// A mask on the wire: either a full COCO RLE object or a bare counts
/// string whose size is implied by the request image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireRle {
    Full(CocoRle),
    Counts(String),
}

/// One element of the backend's JSON response array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    pub label_id: u32,
    pub rle_mask: WireRle,
    pub score: f64,
}

/// Client for an instance-segmentation model served over HTTP.
///
/// Uses a blocking client; call from a worker thread, not from inside an
/// async executor.
#[derive(Debug, Clone)]
pub struct ExternalSegmenter {
    config: ExternalConfig,
    filter: MaskFilter,
    taxonomy: LabelTaxonomy,
}

impl ExternalSegmenter {
    pub fn new(config: ExternalConfig, filter: MaskFilter) -> Self {
        Self { config, filter, taxonomy: LabelTaxonomy::default() }
    }

    fn request(&self, png: Vec<u8>) -> Result<Vec<WireDetection>> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(self.config.timeout_secs))
            .build()
            .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
        let response = client
            .post(&self.config.url)
            .header(reqwest::header::CONTENT_TYPE, "image/png")
            .body(png)
            .send()
            .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() {
            return Err(Error::BackendUnavailable(format!("backend answered {status}")));
        }
        if !status.is_success() {
            return Err(Error::Protocol(format!("backend answered {status}")));
        }
        let body = response.bytes().map_err(|e| Error::BackendUnavailable(e.to_string()))?;
        serde_json::from_slice(&body).map_err(|e| Error::Protocol(format!("malformed response: {e}")))
    }

    /// Converts a parsed response into detections for an image of `dims`.
    pub fn parse_detections(&self, dims: (usize, usize), wire: Vec<WireDetection>) -> Result<Vec<Detection>> {
        wire.into_iter()
            .map(|d| {
                if !self.taxonomy.contains(d.label_id) {
                    return Err(Error::Protocol(format!("unknown label id {}", d.label_id)));
                }
                let mask = match d.rle_mask {
                    WireRle::Full(rle) => {
                        if rle.size != [dims.0, dims.1] {
                            return Err(Error::Protocol(format!(
                                "mask size {:?} does not match image {}x{}",
                                rle.size, dims.0, dims.1
                            )));
                        }
                        rle.decode()
                    }
                    WireRle::Counts(s) => decode_counts(&s, dims.0, dims.1),
                }
                .map_err(|e| Error::Protocol(e.to_string()))?;
                Ok(Detection { label: d.label_id, mask, score: d.score })
            })
            .collect()
    }
}

impl Segmenter for ExternalSegmenter {
    fn segment(&self, image: &ImageTensor) -> Result<MaskSet> {
        let wire = self.request(image.encode_png()?)?;
        let detections = self.parse_detections(image.dims(), wire)?;
        finalize(image.dims(), detections, &self.filter)
    }
}
