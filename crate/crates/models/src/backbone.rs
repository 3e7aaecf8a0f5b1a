//! Frozen convolutional feature extractors.
//!
//! A backbone is a stack of `conv -> ReLU` stages, optionally followed by
//! adaptive average pooling onto a fixed output grid. Its weights are fully
//! determined by its config (including the seed), and its identity is
//! pinned by a SHA-256 over config and weights.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{rng, Conv2d, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub id: String,
    pub input_resolution: usize,
    pub stages: Vec<ConvStage>,
    /// Adaptive-average-pool target `(rows, cols)`, if any.
    pub output_grid: Option<(usize, usize)>,
    pub seed: u64,
}

impl BackboneConfig {
    /// Pinned 3-stage extractor for tests and desk-scale runs:
    /// 64x64x3 in, 8x8x16 out.
    pub fn tiny() -> Self {
        Self {
            id: "tiny-conv3/v1".into(),
            input_resolution: 64,
            stages: vec![
                ConvStage { out_channels: 8, kernel: 3, stride: 2 },
                ConvStage { out_channels: 16, kernel: 3, stride: 2 },
                ConvStage { out_channels: 16, kernel: 3, stride: 2 },
            ],
            output_grid: None,
            seed: 0x5eed_0001,
        }
    }

    /// Full-size layout: 256x256x3 in, 14x14x2048 out.
    pub fn reference() -> Self {
        Self {
            id: "reference-conv5/v1".into(),
            input_resolution: 256,
            stages: vec![
                ConvStage { out_channels: 64, kernel: 3, stride: 2 },
                ConvStage { out_channels: 128, kernel: 3, stride: 2 },
                ConvStage { out_channels: 256, kernel: 3, stride: 2 },
                ConvStage { out_channels: 512, kernel: 3, stride: 2 },
                ConvStage { out_channels: 2048, kernel: 1, stride: 1 },
            ],
            output_grid: Some((14, 14)),
            seed: 0x5eed_0002,
        }
    }

    /// `(channels, rows, cols)` of the produced feature map.
    pub fn output_dims(&self) -> (usize, usize, usize) {
        let mut size = (self.input_resolution, self.input_resolution);
        for s in &self.stages {
            size = (size.0.div_ceil(s.stride), size.1.div_ceil(s.stride));
        }
        let (h, w) = self.output_grid.unwrap_or(size);
        let c = self.stages.last().map_or(3, |s| s.out_channels);
        (c, h, w)
    }

    fn validate(&self) -> Result<()> {
        if self.input_resolution == 0 || self.stages.is_empty() {
            return Err(Error::invalid("backbone needs a resolution and at least one stage"));
        }
        if self.stages.iter().any(|s| s.kernel % 2 == 0 || s.stride == 0 || s.out_channels == 0) {
            return Err(Error::invalid("backbone stages need odd kernels and positive strides"));
        }
        Ok(())
    }
}

/// Averaging matrix `(h*w, gh*gw)` with the usual adaptive-pool bins
/// `[floor(i*h/gh), ceil((i+1)*h/gh))`.
fn adaptive_pool_matrix(h: usize, w: usize, gh: usize, gw: usize, dtype: DType) -> Result<Tensor> {
    let mut m = vec![0f64; h * w * gh * gw];
    for oy in 0..gh {
        let (y0, y1) = (oy * h / gh, ((oy + 1) * h).div_ceil(gh));
        for ox in 0..gw {
            let (x0, x1) = (ox * w / gw, ((ox + 1) * w).div_ceil(gw));
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            for y in y0..y1 {
                for x in x0..x1 {
                    m[(y * w + x) * gh * gw + oy * gw + ox] = 1.0 / n;
                }
            }
        }
    }
    Ok(Tensor::from_vec(m, (h * w, gh * gw), &Device::Cpu)?.to_dtype(dtype)?)
}

#[derive(Debug, Clone)]
pub struct Backbone {
    config: BackboneConfig,
    store: ParamStore,
    convs: Vec<Conv2d>,
    hash: String,
}

impl Backbone {
    pub fn new(config: BackboneConfig, dtype: DType) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new("backbone", dtype);
        let mut r = rng(config.seed);
        let mut in_ch = 3;
        let mut convs = Vec::with_capacity(config.stages.len());
        for (i, s) in config.stages.iter().enumerate() {
            convs.push(Conv2d::new(&mut store, &format!("stage{i}"), &mut r, in_ch, s.out_channels, s.kernel, s.stride, 1)?);
            in_ch = s.out_channels;
        }
        let hash = Self::compute_hash(&config, &store)?;
        Ok(Self { config, store, convs, hash })
    }

    fn compute_hash(config: &BackboneConfig, store: &ParamStore) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(config)?);
        for (name, t) in store.snapshot() {
            h.update(name.as_bytes());
            for v in t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()? {
                h.update(v.to_le_bytes());
            }
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn output_dims(&self) -> (usize, usize, usize) {
        self.config.output_dims()
    }

    /// `(N, 3, R, R)` images in `[0, 1]` to `(N, C, Hf, Wf)` features.
    pub fn forward(&self, images: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = images.dims4()?;
        let r = self.config.input_resolution;
        if c != 3 || h != r || w != r {
            return Err(Error::invalid(format!(
                "backbone expects 3x{r}x{r} inputs, got {c}x{h}x{w}"
            )));
        }
        let mut x = ((images * 2.0)? - 1.0)?;
        for conv in &self.convs {
            x = conv.forward(&x)?.relu()?;
        }
        if let Some((gh, gw)) = self.config.output_grid {
            let (n, c, h, w) = x.dims4()?;
            if (h, w) != (gh, gw) {
                let pool = adaptive_pool_matrix(h, w, gh, gw, x.dtype())?;
                x = x.reshape((n * c, h * w))?.matmul(&pool)?.reshape((n, c, gh, gw))?;
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::to_f64_vec;

    #[test]
    fn output_dims_follow_strides() {
        assert_eq!(BackboneConfig::tiny().output_dims(), (16, 8, 8));
        assert_eq!(BackboneConfig::reference().output_dims(), (2048, 14, 14));
    }

    #[test]
    fn adaptive_pool_rows_average() {
        let m = adaptive_pool_matrix(4, 4, 2, 2, DType::F64).unwrap();
        let x = Tensor::arange(0f64, 16.0, &Device::Cpu).unwrap().reshape((1, 16)).unwrap();
        let y = to_f64_vec(&x.matmul(&m).unwrap()).unwrap();
        assert_eq!(y, vec![2.5, 4.5, 10.5, 12.5]);
        // columns of the pooling matrix are averaging weights
        let colsum = to_f64_vec(&adaptive_pool_matrix(16, 16, 14, 14, DType::F64).unwrap().sum(0).unwrap()).unwrap();
        assert!(colsum.iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn hash_pins_weights() {
        let a = Backbone::new(BackboneConfig::tiny(), DType::F32).unwrap();
        let b = Backbone::new(BackboneConfig::tiny(), DType::F32).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut other = BackboneConfig::tiny();
        other.seed += 1;
        assert_ne!(Backbone::new(other, DType::F32).unwrap().hash(), a.hash());
    }
}
