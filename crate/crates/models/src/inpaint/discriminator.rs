use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{rng, Conv2d, ParamStore};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    /// Channels of the stride-2 patch convolutions.
    pub channels: Vec<usize>,
    pub seed: u64,
}

impl DiscriminatorConfig {
    pub fn tiny() -> Self {
        Self { channels: vec![8, 16, 32], seed: 13 }
    }

    pub fn reference() -> Self {
        Self { channels: vec![64, 128, 256, 256, 256], seed: 13 }
    }
}

/// Anything that assigns a realness score to each image of a batch.
pub trait Critic {
    /// `(N, 3, H, W)` images to `(N,)` scores.
    fn score(&self, images: &Tensor) -> Result<Tensor>;
}

/// Patch discriminator: strided 5x5 convolutions with leaky ReLU, a final
/// one-channel 3x3 convolution, and the spatial mean of the patch scores.
#[derive(Debug, Clone)]
pub struct Discriminator {
    config: DiscriminatorConfig,
    store: ParamStore,
    convs: Vec<Conv2d>,
    head: Conv2d,
}

impl Discriminator {
    pub fn new(config: DiscriminatorConfig, dtype: DType) -> Result<Self> {
        if config.channels.is_empty() || config.channels.contains(&0) {
            return Err(Error::invalid("discriminator needs at least one positive layer width"));
        }
        let mut r = rng(config.seed);
        let mut store = ParamStore::new("disc", dtype);
        let mut convs = Vec::with_capacity(config.channels.len());
        let mut cin = 3;
        for (i, &cout) in config.channels.iter().enumerate() {
            convs.push(Conv2d::new(&mut store, &format!("conv{i}"), &mut r, cin, cout, 5, 2, 1)?);
            cin = cout;
        }
        let head = Conv2d::new(&mut store, "head", &mut r, cin, 1, 3, 1, 1)?;
        Ok(Self { config, store, convs, head })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }
}

impl Critic for Discriminator {
    fn score(&self, images: &Tensor) -> Result<Tensor> {
        let mut x = ((images * 2.0)? - 1.0)?;
        for conv in &self.convs {
            x = candle_nn::ops::leaky_relu(&conv.forward(&x)?, 0.2)?;
        }
        Ok(self.head.forward(&x)?.flatten_from(1)?.mean(1)?)
    }
}

/// Scores every image with the same value.
#[derive(Debug, Clone, Copy)]
pub struct ConstantCritic(pub f64);

impl Critic for ConstantCritic {
    fn score(&self, images: &Tensor) -> Result<Tensor> {
        let n = images.dim(0)?;
        Ok((Tensor::ones(n, images.dtype(), images.device())? * self.0)?)
    }
}
