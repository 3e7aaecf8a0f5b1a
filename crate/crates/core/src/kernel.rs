//! Gaussian kernels and the blurred counterfactual sub-image.

use ndarray::Array3;

use crate::error::{ensure_dims, Error, Result};
use crate::image::ImageTensor;
use crate::mask::ElementMask;

/// A normalized, square Gaussian kernel sampled on the integer grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    size: usize,
    variance: f64,
    weights: Vec<f64>,
}

impl GaussianKernel {
    /// `exp(-(dx² + dy²) / (2 variance))` around the middle cell, scaled to sum to 1.
    pub fn new(size: usize, variance: f64) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::invalid(format!("kernel size must be odd and positive, got {size}")));
        }
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::invalid(format!("kernel variance must be positive, got {variance}")));
        }
        let radius = (size / 2) as i64;
        let mut weights = Vec::with_capacity(size * size);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let d2 = (dx * dx + dy * dy) as f64;
                weights.push((-d2 / (2.0 * variance)).exp());
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { size, variance, weights })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    /// Weight at `(row, col)` of the `size x size` grid.
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Default for GaussianKernel {
    /// 13x13 with unit variance.
    fn default() -> Self {
        Self::new(13, 1.0).expect("default kernel parameters are valid")
    }
}

/// Builds a [`GaussianKernel`].
pub fn build_gaussian_kernel(size: usize, variance: f64) -> Result<GaussianKernel> {
    GaussianKernel::new(size, variance)
}

/// Mirror index into `[0, n)` without repeating the edge sample
/// (`-1 -> 1`, `n -> n-2`), valid for arbitrarily large offsets.
pub(crate) fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < n as i64 { m } else { period - m }) as usize
}

/// Returns the counterfactual sub-image for one element: masked pixels are
/// replaced by the kernel convolution of the *original* image (reflect
/// padding at the borders); every other pixel is copied unchanged.
pub fn blur_element(
    image: &ImageTensor,
    mask: &ElementMask,
    kernel: &GaussianKernel,
) -> Result<ImageTensor> {
    ensure_dims("blur mask", image.dims(), mask.mask.dims())?;
    let (h, w) = image.dims();
    let src = image.as_array();
    let mut out: Array3<f32> = src.clone();
    let radius = kernel.radius() as i64;
    let size = kernel.size();

    for ((r, c), &selected) in mask.mask.cells().indexed_iter() {
        if !selected {
            continue;
        }
        let mut acc = [0f64; 3];
        for ky in 0..size {
            let sy = reflect(r as i64 + ky as i64 - radius, h);
            for kx in 0..size {
                let sx = reflect(c as i64 + kx as i64 - radius, w);
                let wgt = kernel.weight(ky, kx);
                for (ch, a) in acc.iter_mut().enumerate() {
                    *a += wgt * f64::from(src[[sy, sx, ch]]);
                }
            }
        }
        for (ch, a) in acc.iter().enumerate() {
            out[[r, c, ch]] = (*a as f32).clamp(0.0, 1.0);
        }
    }
    ImageTensor::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::BinaryMask;
    use proptest::prelude::*;

    /// Independent evaluation: plain loops, explicit normalization.
    fn oracle_kernel(size: usize, variance: f64) -> Vec<Vec<f64>> {
        let c = (size / 2) as f64;
        let mut k = vec![vec![0.0; size]; size];
        let mut total = 0.0;
        for (y, row) in k.iter_mut().enumerate() {
            for (x, v) in row.iter_mut().enumerate() {
                let (dy, dx) = (y as f64 - c, x as f64 - c);
                *v = (-(dx * dx + dy * dy) / (2.0 * variance)).exp();
                total += *v;
            }
        }
        for row in &mut k {
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        k
    }

    fn oracle_reflect(i: i64, n: i64) -> i64 {
        let mut i = i;
        loop {
            if i < 0 {
                i = -i;
            } else if i >= n {
                i = 2 * (n - 1) - i;
            } else {
                return i;
            }
        }
    }

    #[test]
    fn size_one_kernel_is_unit() {
        assert_eq!(build_gaussian_kernel(1, 1.0).unwrap().weights(), &[1.0]);
    }

    #[test]
    fn huge_variance_approaches_uniform() {
        let k = build_gaussian_kernel(3, 1e12).unwrap();
        for &w in k.weights() {
            assert!((w - 1.0 / 9.0).abs() < 1e-9);
        }
    }

    #[test]
    fn reference_kernel_matches_direct_evaluation() {
        let k = GaussianKernel::default();
        let oracle = oracle_kernel(13, 1.0);
        assert!((k.weight(6, 6) - oracle[6][6]).abs() < 1e-15);
        // frozen from the oracle: 1 / sum over the 13x13 grid of exp(-d²/2)
        assert!((k.weight(6, 6) - 0.159_154_941_394_572_6).abs() < 1e-12);
        for y in 0..13 {
            for x in 0..13 {
                assert!((k.weight(y, x) - oracle[y][x]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn invalid_kernel_parameters() {
        assert!(build_gaussian_kernel(4, 1.0).is_err());
        assert!(build_gaussian_kernel(0, 1.0).is_err());
        assert!(build_gaussian_kernel(3, 0.0).is_err());
        assert!(build_gaussian_kernel(3, -1.0).is_err());
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        for (size, var) in [(3, 0.5), (7, 2.0), (13, 1.0), (13, 9.0)] {
            let k = build_gaussian_kernel(size, var).unwrap();
            let total: f64 = k.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            for y in 0..size {
                for x in 0..size {
                    let w = k.weight(y, x);
                    assert_eq!(w, k.weight(size - 1 - y, x));
                    assert_eq!(w, k.weight(y, size - 1 - x));
                    assert_eq!(w, k.weight(x, y));
                }
            }
        }
    }

    #[test]
    fn reflect_matches_oracle() {
        for n in 1..6i64 {
            for i in -30..30 {
                let expected = if n == 1 { 0 } else { oracle_reflect(i, n) };
                assert_eq!(reflect(i, n as usize) as i64, expected, "i={i} n={n}");
            }
        }
    }

    fn gradient_image(h: usize, w: usize) -> ImageTensor {
        ImageTensor::from_fn(h, w, |r, c, ch| ((r * 7 + c * 13 + ch * 5) % 17) as f32 / 16.0).unwrap()
    }

    #[test]
    fn empty_mask_is_identity() {
        let img = gradient_image(9, 11);
        let m = ElementMask::new(1, 1, BinaryMask::zeros(9, 11));
        assert_eq!(blur_element(&img, &m, &GaussianKernel::default()).unwrap(), img);
    }

    #[test]
    fn constant_image_is_fixed_point() {
        let img = ImageTensor::filled(16, 16, 0.5).unwrap();
        let m = ElementMask::new(1, 1, BinaryMask::rect(16, 16, 2, 3, 9, 9));
        assert_eq!(blur_element(&img, &m, &GaussianKernel::default()).unwrap(), img);
    }

    #[test]
    fn single_pixel_matches_bruteforce_convolution() {
        let img = gradient_image(5, 5);
        for (size, var) in [(3usize, 1.0f64), (13, 1.0)] {
            let k = build_gaussian_kernel(size, var).unwrap();
            let ok = oracle_kernel(size, var);
            for (r, c) in [(2usize, 2usize), (0, 4), (4, 1)] {
                let mut m = BinaryMask::zeros(5, 5);
                m.set(r, c, true);
                let out = blur_element(&img, &ElementMask::new(1, 1, m), &k).unwrap();
                let rad = (size / 2) as i64;
                for ch in 0..3 {
                    let mut acc = 0.0f64;
                    for ky in 0..size as i64 {
                        for kx in 0..size as i64 {
                            let y = oracle_reflect(r as i64 + ky - rad, 5) as usize;
                            let x = oracle_reflect(c as i64 + kx - rad, 5) as usize;
                            acc += ok[ky as usize][kx as usize] * f64::from(img.get(y, x, ch));
                        }
                    }
                    assert!((f64::from(out.get(r, c, ch)) - acc).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let img = gradient_image(5, 5);
        let m = ElementMask::new(1, 1, BinaryMask::zeros(5, 6));
        assert!(matches!(
            blur_element(&img, &m, &GaussianKernel::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn blur_only_touches_masked_pixels(
            h in 1usize..12, w in 1usize..12, seed in any::<u64>(), density in 0.0f64..1.0
        ) {
            let mut state = seed;
            let mut next = || { state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (state >> 33) as f64 / (1u64 << 31) as f64 };
            let img = ImageTensor::from_fn(h, w, |_, _, _| next() as f32).unwrap();
            let mask = BinaryMask::from_fn(h, w, |_, _| next() < density);
            let out = blur_element(&img, &ElementMask::new(1, 1, mask.clone()), &GaussianKernel::default()).unwrap();
            for r in 0..h {
                for c in 0..w {
                    for ch in 0..3 {
                        let v = out.get(r, c, ch);
                        prop_assert!((0.0..=1.0).contains(&v));
                        if !mask.get(r, c) {
                            prop_assert_eq!(v.to_bits(), img.get(r, c, ch).to_bits());
                        }
                    }
                }
            }
        }
    }
}
