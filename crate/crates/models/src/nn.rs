//! Minimal layer toolkit on top of candle: named parameter stores with
//! seeded initialization, convolutions, dense layers and tensor/image
//! conversions.

use candle_core::{DType, Device, Tensor, Var};
use declutter_core::{BinaryMask, ImageTensor};
use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Ordered, named trainable parameters. Layers hold clones of the same
/// [`Var`]s, so updating a var through the store updates the layer.
#[derive(Debug, Clone)]
pub struct ParamStore {
    prefix: String,
    entries: Vec<(String, Var)>,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(prefix: &str, dtype: DType) -> Self {
        Self { prefix: prefix.to_owned(), entries: Vec::new(), dtype, device: Device::Cpu }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn add(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> Result<Var> {
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        self.entries.push((format!("{}.{}", self.prefix, name), var.clone()));
        Ok(var)
    }

    /// He-normal weights for a layer with `fan_in` inputs.
    fn he_normal(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Result<Var> {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
        let n = shape.iter().product();
        let values = (0..n).map(|_| normal.sample(rng)).collect();
        self.add(name, shape, values)
    }

    fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<Var> {
        let n = shape.iter().product();
        self.add(name, shape, vec![0.0; n])
    }

    pub fn vars(&self) -> Vec<Var> {
        self.entries.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn named(&self) -> &[(String, Var)] {
        &self.entries
    }

    pub fn num_parameters(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// Snapshot of every parameter as `(name, tensor)`.
    pub fn snapshot(&self) -> Vec<(String, Tensor)> {
        self.entries.iter().map(|(n, v)| (n.clone(), v.as_tensor().copy().expect("cpu copy"))).collect()
    }

    /// Overwrites parameters by name; every parameter must be present with
    /// the same shape.
    pub fn load(&self, tensors: &[(String, Tensor)]) -> Result<()> {
        for (name, var) in &self.entries {
            let (_, t) = tensors
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            if t.dims() != var.dims() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: expected shape {:?}, found {:?}",
                    var.dims(),
                    t.dims()
                )));
            }
            var.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }

    /// Sets every parameter to zero.
    pub fn zero_all(&self) -> Result<()> {
        for (_, var) in &self.entries {
            var.set(&var.as_tensor().zeros_like()?)?;
        }
        Ok(())
    }
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Var,
    pub bias: Var,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        rng: &mut ChaCha8Rng,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
    ) -> Result<Self> {
        let weight = store.he_normal(
            &format!("{name}.weight"),
            &[out_channels, in_channels, kernel, kernel],
            in_channels * kernel * kernel,
            rng,
        )?;
        let bias = store.zeros(&format!("{name}.bias"), &[out_channels])?;
        Ok(Self { weight, bias, stride, padding: dilation * (kernel / 2), dilation })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(self.weight.as_tensor(), self.padding, self.stride, self.dilation, 1)?;
        let b = self.bias.as_tensor().reshape((1, self.out_channels(), 1, 1))?;
        Ok(y.broadcast_add(&b)?)
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        rng: &mut ChaCha8Rng,
        in_features: usize,
        out_features: usize,
    ) -> Result<Self> {
        let weight = store.he_normal(&format!("{name}.weight"), &[out_features, in_features], in_features, rng)?;
        let bias = store.zeros(&format!("{name}.bias"), &[out_features])?;
        Ok(Self { weight, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weight.dims()[1]
    }

    /// `(N, in) -> (N, out)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.matmul(&self.weight.as_tensor().t()?)?;
        Ok(y.broadcast_add(self.bias.as_tensor())?)
    }
}

/// `(N, 3, H, W)` tensor of a batch of equally sized images.
pub fn images_to_tensor(images: &[&ImageTensor], dtype: DType) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| Error::invalid("empty image batch"))?;
    let (h, w) = first.dims();
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if img.dims() != (h, w) {
            return Err(Error::invalid("images in a batch must share dimensions"));
        }
        let a = img.as_array();
        for ch in 0..3 {
            for r in 0..h {
                for c in 0..w {
                    data.push(a[[r, c, ch]]);
                }
            }
        }
    }
    Ok(Tensor::from_vec(data, (images.len(), 3, h, w), &Device::Cpu)?.to_dtype(dtype)?)
}

/// `(N, 1, H, W)` tensor with 1.0 on set cells.
pub fn masks_to_tensor(masks: &[&BinaryMask], dtype: DType) -> Result<Tensor> {
    let first = masks.first().ok_or_else(|| Error::invalid("empty mask batch"))?;
    let (h, w) = first.dims();
    let mut data = Vec::with_capacity(masks.len() * h * w);
    for m in masks {
        if m.dims() != (h, w) {
            return Err(Error::invalid("masks in a batch must share dimensions"));
        }
        data.extend(m.cells().iter().map(|&v| if v { 1f32 } else { 0f32 }));
    }
    Ok(Tensor::from_vec(data, (masks.len(), 1, h, w), &Device::Cpu)?.to_dtype(dtype)?)
}

/// Converts one `(3, H, W)` tensor (values clamped to `[0, 1]`) to an image.
pub fn tensor_to_image(t: &Tensor) -> Result<ImageTensor> {
    let (c, h, w) = t.dims3()?;
    if c != 3 {
        return Err(Error::invalid(format!("expected 3 channels, got {c}")));
    }
    let v = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    let data = Array3::from_shape_fn((h, w, 3), |(r, col, ch)| v[ch * h * w + r * w + col]);
    Ok(ImageTensor::from_clamped(data)?)
}

/// Reads a whole tensor as `f64` values in row-major order.
pub fn to_f64_vec(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_init_is_reproducible() {
        let build = || {
            let mut store = ParamStore::new("t", DType::F32);
            let mut r = rng(9);
            Conv2d::new(&mut store, "c", &mut r, 3, 4, 3, 1, 1).unwrap();
            store.snapshot()
        };
        let (a, b) = (build(), build());
        for ((na, ta), (nb, tb)) in a.iter().zip(&b) {
            assert_eq!(na, nb);
            assert_eq!(to_f64_vec(ta).unwrap(), to_f64_vec(tb).unwrap());
        }
    }

    #[test]
    fn linear_forward_matches_hand_computation() {
        let mut store = ParamStore::new("t", DType::F64);
        let lin = Linear::new(&mut store, "l", &mut rng(0), 2, 1).unwrap();
        lin.weight.set(&Tensor::new(&[[2.0f64, -1.0]], &Device::Cpu).unwrap()).unwrap();
        lin.bias.set(&Tensor::new(&[0.5f64], &Device::Cpu).unwrap()).unwrap();
        let x = Tensor::new(&[[3.0f64, 4.0]], &Device::Cpu).unwrap();
        let y = to_f64_vec(&lin.forward(&x).unwrap()).unwrap();
        assert_eq!(y, vec![2.5]);
    }

    #[test]
    fn image_tensor_round_trip() {
        let img = ImageTensor::from_fn(3, 5, |r, c, ch| ((r + 2 * c + 3 * ch) % 7) as f32 / 7.0).unwrap();
        let t = images_to_tensor(&[&img], DType::F32).unwrap();
        assert_eq!(tensor_to_image(&t.get(0).unwrap()).unwrap(), img);
    }
}
