use candle_core::{DType, Tensor};
use declutter_core::{BinaryMask, ImageTensor};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ConfidenceMap, Inpainter};
use crate::error::{Error, Result};
use crate::nn::{images_to_tensor, masks_to_tensor, rng, to_f64_vec, Conv2d, ParamStore};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Output channels of the six encoder convolutions.
    pub encoder: [usize; 6],
    /// Output channels of the seven decoder convolutions; the last is 3.
    pub decoder: [usize; 7],
    pub confidence_hidden: usize,
    /// Side of the square window the network is run on; larger inputs are
    /// tiled.
    pub native_resolution: usize,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn tiny() -> Self {
        Self {
            encoder: [8, 8, 16, 16, 32, 32],
            decoder: [32, 32, 16, 16, 8, 4, 3],
            confidence_hidden: 4,
            native_resolution: 32,
            seed: 11,
        }
    }

    pub fn reference() -> Self {
        Self {
            encoder: [48, 48, 96, 96, 192, 192],
            decoder: [192, 192, 96, 96, 48, 24, 3],
            confidence_hidden: 24,
            native_resolution: 256,
            seed: 11,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.decoder[6] != 3 {
            return Err(Error::invalid("the last decoder layer must emit 3 channels"));
        }
        if self.native_resolution < 8 || self.native_resolution % 4 != 0 {
            return Err(Error::invalid("native resolution must be a multiple of 4, at least 8"));
        }
        if self.encoder.iter().chain(&self.decoder).any(|&c| c == 0) || self.confidence_hidden == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(())
    }
}

/// Image branch output `y` and confidence branch output `b` for a batch.
#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    /// `(N, 3, H, W)` in `[0, 1]`.
    pub image: Tensor,
    /// `(N, 1, H, W)` in `[0, 1]`; high values flag likely artifacts.
    pub confidence: Tensor,
}

/// Encoder-decoder generator with a per-pixel confidence branch.
///
/// The image branch parameters live in [`Generator::image_params`], the
/// confidence head in [`Generator::confidence_params`], so the two can be
/// optimized separately.
#[derive(Debug, Clone)]
pub struct Generator {
    config: GeneratorConfig,
    image_store: ParamStore,
    confidence_store: ParamStore,
    encoder: Vec<Conv2d>,
    decoder: Vec<Conv2d>,
    confidence: (Conv2d, Conv2d),
}

impl Generator {
    pub fn new(config: GeneratorConfig, dtype: DType) -> Result<Self> {
        config.validate()?;
        let mut r = rng(config.seed);
        let mut image_store = ParamStore::new("gen", dtype);
        let e = config.encoder;
        let d = config.decoder;
        // (in, out, kernel, stride, dilation)
        let enc_layout = [
            (4, e[0], 5, 1, 1),
            (e[0], e[1], 3, 2, 1),
            (e[1], e[2], 3, 1, 1),
            (e[2], e[3], 3, 2, 1),
            (e[3], e[4], 3, 1, 2),
            (e[4], e[5], 3, 1, 4),
        ];
        let mut encoder = Vec::with_capacity(6);
        for (i, (cin, cout, k, s, dil)) in enc_layout.into_iter().enumerate() {
            encoder.push(Conv2d::new(&mut image_store, &format!("enc{i}"), &mut r, cin, cout, k, s, dil)?);
        }
        let mut decoder = Vec::with_capacity(7);
        let mut cin = e[5];
        for (i, &cout) in d.iter().enumerate() {
            decoder.push(Conv2d::new(&mut image_store, &format!("dec{i}"), &mut r, cin, cout, 3, 1, 1)?);
            cin = cout;
        }
        let mut confidence_store = ParamStore::new("conf", dtype);
        let confidence = (
            Conv2d::new(&mut confidence_store, "conv1", &mut r, d[5], config.confidence_hidden, 3, 1, 1)?,
            Conv2d::new(&mut confidence_store, "conv2", &mut r, config.confidence_hidden, 1, 1, 1, 1)?,
        );
        Ok(Self { config, image_store, confidence_store, encoder, decoder, confidence })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn dtype(&self) -> DType {
        self.image_store.dtype()
    }

    pub fn native_resolution(&self) -> usize {
        self.config.native_resolution
    }

    /// Parameters of the image branch (encoder and decoder).
    pub fn image_params(&self) -> &ParamStore {
        &self.image_store
    }

    /// Parameters of the confidence head.
    pub fn confidence_params(&self) -> &ParamStore {
        &self.confidence_store
    }

    /// Batched forward pass. `corrupted` is `(N, 3, H, W)` and `mask` is
    /// `(N, 1, H, W)` with 1 on missing pixels; `H` and `W` must be
    /// multiples of 4.
    pub fn forward(&self, corrupted: &Tensor, mask: &Tensor) -> Result<GeneratorOutput> {
        let (n, c, h, w) = corrupted.dims4()?;
        if c != 3 || mask.dims() != [n, 1, h, w] {
            return Err(Error::invalid(format!(
                "generator expects (N,3,H,W) and (N,1,H,W), got {:?} and {:?}",
                corrupted.dims(),
                mask.dims()
            )));
        }
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::invalid("generator input sides must be multiples of 4"));
        }
        let mut x = Tensor::cat(&[corrupted, mask], 1)?;
        for conv in &self.encoder {
            x = conv.forward(&x)?.elu(1.0)?;
        }
        for (i, conv) in self.decoder.iter().enumerate() {
            if i == 2 {
                x = x.upsample_nearest2d(h / 2, w / 2)?;
            } else if i == 4 {
                x = x.upsample_nearest2d(h, w)?;
            }
            if i == 6 {
                let b = self.confidence.0.forward(&x)?.elu(1.0)?;
                let b = candle_nn::ops::sigmoid(&self.confidence.1.forward(&b)?)?;
                let y = candle_nn::ops::sigmoid(&conv.forward(&x)?)?;
                return Ok(GeneratorOutput { image: y, confidence: b });
            }
            x = conv.forward(&x)?.elu(1.0)?;
        }
        unreachable!("the decoder has seven layers")
    }

    /// Runs on one window of at most native size, padding to a multiple of 4.
    fn generate_window(&self, corrupted: &ImageTensor, mask: &BinaryMask) -> Result<(Array2<f32>, Vec<Array2<f32>>)> {
        let (h, w) = corrupted.dims();
        let (ph, pw) = (h.next_multiple_of(4), w.next_multiple_of(4));
        let img = images_to_tensor(&[corrupted], self.dtype())?.pad_with_zeros(2, 0, ph - h)?.pad_with_zeros(3, 0, pw - w)?;
        let m = masks_to_tensor(&[mask], self.dtype())?.pad_with_zeros(2, 0, ph - h)?.pad_with_zeros(3, 0, pw - w)?;
        let out = self.forward(&img, &m)?;
        let y = to_f64_vec(&out.image.narrow(2, 0, h)?.narrow(3, 0, w)?)?;
        let b = to_f64_vec(&out.confidence.narrow(2, 0, h)?.narrow(3, 0, w)?)?;
        let conf = Array2::from_shape_fn((h, w), |(r, c)| b[r * w + c] as f32);
        let channels = (0..3)
            .map(|ch| Array2::from_shape_fn((h, w), |(r, c)| y[ch * h * w + r * w + c] as f32))
            .collect();
        Ok((conf, channels))
    }
}

/// Window start offsets covering `len` with windows of `size` and stride
/// `size - overlap`; the last window is flush with the end.
pub(crate) fn tile_starts(len: usize, size: usize, overlap: usize) -> Vec<usize> {
    if len <= size {
        return vec![0];
    }
    let stride = size - overlap;
    let mut starts: Vec<usize> = (0..).map(|i| i * stride).take_while(|&s| s + size < len).collect();
    starts.push(len - size);
    starts
}

/// Blending weight of a tile pixel at distance `d` from the nearest tile
/// edge: a linear ramp over `ramp` pixels, then flat.
fn feather(d: usize, ramp: usize) -> f32 {
    ((d + 1) as f32 / ramp as f32).min(1.0)
}

impl Inpainter for Generator {
    fn generate(&self, corrupted: &ImageTensor, mask: &BinaryMask) -> Result<(ImageTensor, ConfidenceMap)> {
        let (h, w) = corrupted.dims();
        if mask.dims() != (h, w) {
            return Err(Error::invalid(format!(
                "mask is {}x{} but the image is {h}x{w}",
                mask.height(),
                mask.width()
            )));
        }
        let native = self.native_resolution();
        let overlap = native / 4;
        let (rows, cols) = (tile_starts(h, native, overlap), tile_starts(w, native, overlap));
        let mut acc_y = [Array2::<f32>::zeros((h, w)), Array2::zeros((h, w)), Array2::zeros((h, w))];
        let mut acc_b = Array2::<f32>::zeros((h, w));
        let mut acc_w = Array2::<f32>::zeros((h, w));
        let single = rows.len() == 1 && cols.len() == 1;
        for &top in &rows {
            let th = native.min(h);
            for &left in &cols {
                let tw = native.min(w);
                let window = |r: usize, c: usize| (top + r, left + c);
                let sub_img = if single {
                    corrupted.clone()
                } else {
                    ImageTensor::from_fn(th, tw, |r, c, ch| {
                        let (y, x) = window(r, c);
                        corrupted.get(y, x, ch)
                    })?
                };
                let sub_mask = if single {
                    mask.clone()
                } else {
                    BinaryMask::from_fn(th, tw, |r, c| {
                        let (y, x) = window(r, c);
                        mask.get(y, x)
                    })
                };
                let (b, y) = self.generate_window(&sub_img, &sub_mask)?;
                for r in 0..th {
                    for c in 0..tw {
                        let d = r.min(c).min(th - 1 - r).min(tw - 1 - c);
                        let wt = if single { 1.0 } else { feather(d, overlap.max(1)) };
                        let (yy, xx) = window(r, c);
                        acc_w[[yy, xx]] += wt;
                        acc_b[[yy, xx]] += wt * b[[r, c]];
                        for ch in 0..3 {
                            acc_y[ch][[yy, xx]] += wt * y[ch][[r, c]];
                        }
                    }
                }
            }
        }
        let image = ImageTensor::from_fn(h, w, |r, c, ch| acc_y[ch][[r, c]] / acc_w[[r, c]])?;
        let confidence = ConfidenceMap::from_clamped(&acc_b / &acc_w);
        Ok((image, confidence))
    }
}
