//! The RGB photograph carrier used throughout the pipeline.

use std::path::Path;

use ::image::{imageops, DynamicImage, ImageBuffer, ImageFormat, Rgb, RgbImage};
use ndarray::{Array3, ArrayView3};

use crate::error::{Error, Result};

/// An `H x W x 3` photograph with every value in `[0, 1]`.
///
/// Values are stored row-major as `(row, column, channel)`. 8-bit sources
/// are mapped through `v / 255`, and [`ImageTensor::to_rgb8`] inverts that
/// exactly, so a decode/encode round trip of an 8-bit image is lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    data: Array3<f32>,
}

impl ImageTensor {
    pub fn new(data: Array3<f32>) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::invalid("image must be at least 1x1"));
        }
        if c != 3 {
            return Err(Error::invalid(format!("image must have 3 channels, got {c}")));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { data })
    }

    /// Builds an image by clamping arbitrary values into `[0, 1]`; NaN maps to 0.
    pub fn from_clamped(mut data: Array3<f32>) -> Result<Self> {
        data.mapv_inplace(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        Self::new(data)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(Array3::from_elem((height, width, 3), value))
    }

    pub fn from_fn<F>(height: usize, width: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize, usize) -> f32,
    {
        Self::new(Array3::from_shape_fn((height, width, 3), |(r, c, ch)| f(r, c, ch)))
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[[row, col, channel]]
    }

    pub fn view(&self) -> ArrayView3<'_, f32> {
        self.data.view()
    }

    pub fn as_array(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn into_array(self) -> Array3<f32> {
        self.data
    }

    /// Raw values in `(row, column, channel)` order.
    pub fn to_vec(&self) -> Vec<f32> {
        self.data.iter().copied().collect()
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let data = Array3::from_shape_fn((h as usize, w as usize, 3), |(r, c, ch)| {
            f32::from(img.get_pixel(c as u32, r as u32)[ch]) / 255.0
        });
        Self { data }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let (h, w) = self.dims();
        ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            let px = |ch| (self.data[[y as usize, x as usize, ch]] * 255.0).round() as u8;
            Rgb([px(0), px(1), px(2)])
        })
    }

    /// Decodes PNG or JPEG bytes.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = ::image::load_from_memory(bytes)?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let img = ::image::open(path)?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = std::io::Cursor::new(Vec::new());
        DynamicImage::ImageRgb8(self.to_rgb8()).write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8().save(path)?;
        Ok(())
    }

    /// Bilinear (triangle filter) resize; returns a clone when the size already matches.
    pub fn resize(&self, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("resize target must be at least 1x1"));
        }
        if self.dims() == (height, width) {
            return Ok(self.clone());
        }
        let (h, w) = self.dims();
        let buf: ImageBuffer<Rgb<f32>, Vec<f32>> =
            ImageBuffer::from_raw(w as u32, h as u32, self.to_vec())
                .ok_or_else(|| Error::invalid("image buffer size mismatch"))?;
        let resized =
            imageops::resize(&buf, width as u32, height as u32, imageops::FilterType::Triangle);
        let data = Array3::from_shape_vec((height, width, 3), resized.into_raw())
            .map_err(|e| Error::invalid(e.to_string()))?;
        Self::from_clamped(data)
    }
}
