//! Versioned binary container for model parameters.
//!
//! Layout: the 8-byte magic `DCLTCKPT`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a JSON header and then the
//! raw little-endian tensor data. Tensors keep their dtype, so a save/load
//! round trip is bit-exact.

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DCLTCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
    nbytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    metadata: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: String,
    pub metadata: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(kind: &str, metadata: serde_json::Value, tensors: Vec<(String, Tensor)>) -> Self {
        Self { kind: kind.to_owned(), metadata, tensors }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut data = Vec::new();
        let mut entries = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            let flat = t.flatten_all()?;
            let offset = data.len();
            let dtype = match t.dtype() {
                DType::F32 => {
                    for v in flat.to_vec1::<f32>()? {
                        data.extend_from_slice(&v.to_le_bytes());
                    }
                    "f32"
                }
                DType::F64 => {
                    for v in flat.to_vec1::<f64>()? {
                        data.extend_from_slice(&v.to_le_bytes());
                    }
                    "f64"
                }
                other => return Err(Error::Checkpoint(format!("unsupported dtype {other:?}"))),
            };
            entries.push(TensorEntry {
                name: name.clone(),
                dtype: dtype.to_owned(),
                shape: t.dims().to_vec(),
                offset,
                nbytes: data.len() - offset,
            });
        }
        let header = serde_json::to_vec(&Header {
            kind: self.kind.clone(),
            metadata: self.metadata.clone(),
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(20 + header.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let header_end = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
        let header: Header = serde_json::from_slice(&bytes[20..header_end])?;
        let data = &bytes[header_end..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let raw = data
                .get(e.offset..e.offset + e.nbytes)
                .ok_or_else(|| Error::Checkpoint(format!("truncated data for {}", e.name)))?;
            let t = match e.dtype.as_str() {
                "f32" => {
                    let v: Vec<f32> =
                        raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                    Tensor::from_vec(v, e.shape.as_slice(), &Device::Cpu)?
                }
                "f64" => {
                    let v: Vec<f64> =
                        raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                    Tensor::from_vec(v, e.shape.as_slice(), &Device::Cpu)?
                }
                other => return Err(Error::Checkpoint(format!("unsupported dtype {other}"))),
            };
            tensors.push((e.name, t));
        }
        Ok(Self { kind: header.kind, metadata: header.metadata, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::to_f64_vec;

    #[test]
    fn round_trip_is_bit_exact() {
        let a = Tensor::new(&[[1.5f32, -0.1], [f32::MIN_POSITIVE, 3.0e-7]], &Device::Cpu).unwrap();
        let b = Tensor::new(&[0.1f64, 1.0 / 3.0, -2.5e-300], &Device::Cpu).unwrap();
        let ck = Checkpoint::new("test", serde_json::json!({"x": 1}), vec![("a".into(), a.clone()), ("b".into(), b.clone())]);
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back.kind, "test");
        assert_eq!(back.metadata["x"], 1);
        let bits_a: Vec<u32> = a.flatten_all().unwrap().to_vec1::<f32>().unwrap().iter().map(|v| v.to_bits()).collect();
        let got_a: Vec<u32> =
            back.tensors[0].1.flatten_all().unwrap().to_vec1::<f32>().unwrap().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, got_a);
        assert_eq!(back.tensors[0].1.dims(), &[2, 2]);
        assert_eq!(to_f64_vec(&back.tensors[1].1).unwrap(), to_f64_vec(&b).unwrap());
    }

    #[test]
    fn rejects_other_versions_and_garbage() {
        let ck = Checkpoint::new("test", serde_json::Value::Null, vec![]);
        let mut bytes = ck.to_bytes().unwrap();
        bytes[8] = 99;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checkpoint(_))));
        assert!(Checkpoint::from_bytes(b"hello").is_err());
    }
}
