use crate::error::{ensure_dims, Result};
use crate::image::ImageTensor;
use crate::mask::BinaryMask;

/// `image ∘ (1 − mask)`, broadcast across channels.
pub fn apply_mask_complement(image: &ImageTensor, mask: &BinaryMask) -> Result<ImageTensor> {
    ensure_dims("mask", image.dims(), mask.dims())?;
    let mut data = image.as_array().clone();
    for ((r, c, _), v) in data.indexed_iter_mut() {
        if mask.get(r, c) {
            *v = 0.0;
        }
    }
    ImageTensor::new(data)
}

/// Original pixels outside `mask`, generated pixels inside it. Both sides
/// are copied verbatim, never blended.
pub fn composite(
    original: &ImageTensor,
    generated: &ImageTensor,
    mask: &BinaryMask,
) -> Result<ImageTensor> {
    ensure_dims("generated image", original.dims(), generated.dims())?;
    ensure_dims("mask", original.dims(), mask.dims())?;
    let mut data = original.as_array().clone();
    let gen = generated.as_array();
    for ((r, c, ch), v) in data.indexed_iter_mut() {
        if mask.get(r, c) {
            *v = gen[[r, c, ch]];
        }
    }
    ImageTensor::new(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use proptest::prelude::*;

    fn gray2x2(vals: [[f32; 2]; 2]) -> ImageTensor {
        ImageTensor::new(Array3::from_shape_fn((2, 2, 3), |(r, c, _)| vals[r][c])).unwrap()
    }

    #[test]
    fn complement_definition() {
        let img = gray2x2([[0.2, 0.4], [0.6, 0.8]]);
        let m = BinaryMask::from_fn(2, 2, |r, c| r == c);
        assert_eq!(apply_mask_complement(&img, &m).unwrap(), gray2x2([[0.0, 0.4], [0.6, 0.0]]));
        assert_eq!(
            apply_mask_complement(&img, &BinaryMask::ones(2, 2)).unwrap(),
            ImageTensor::filled(2, 2, 0.0).unwrap()
        );
        assert_eq!(apply_mask_complement(&img, &BinaryMask::zeros(2, 2)).unwrap(), img);
    }

    #[test]
    fn composite_extremes() {
        let a = gray2x2([[0.2, 0.4], [0.6, 0.8]]);
        let b = gray2x2([[0.9, 0.1], [0.3, 0.7]]);
        assert_eq!(composite(&a, &b, &BinaryMask::zeros(2, 2)).unwrap(), a);
        assert_eq!(composite(&a, &b, &BinaryMask::ones(2, 2)).unwrap(), b);
        let m = BinaryMask::from_fn(2, 2, |r, _| r == 0);
        assert_eq!(composite(&a, &a, &m).unwrap(), a);
    }

    #[test]
    fn dimension_mismatch() {
        let a = ImageTensor::filled(3, 3, 0.5).unwrap();
        let b = ImageTensor::filled(3, 4, 0.5).unwrap();
        assert!(composite(&a, &b, &BinaryMask::zeros(3, 3)).is_err());
        assert!(composite(&a, &a, &BinaryMask::zeros(4, 3)).is_err());
        assert!(apply_mask_complement(&a, &BinaryMask::zeros(3, 4)).is_err());
    }

    fn arb_case() -> impl Strategy<Value = (ImageTensor, ImageTensor, BinaryMask)> {
        (1usize..8, 1usize..8).prop_flat_map(|(h, w)| {
            (
                proptest::collection::vec(0.0f32..=1.0, h * w * 3),
                proptest::collection::vec(0.0f32..=1.0, h * w * 3),
                proptest::collection::vec(any::<bool>(), h * w),
            )
                .prop_map(move |(a, b, m)| {
                    (
                        ImageTensor::new(Array3::from_shape_vec((h, w, 3), a).unwrap()).unwrap(),
                        ImageTensor::new(Array3::from_shape_vec((h, w, 3), b).unwrap()).unwrap(),
                        BinaryMask::from_fn(h, w, |r, c| m[r * w + c]),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn composite_selects_exactly((p, y, m) in arb_case()) {
            let out = composite(&p, &y, &m).unwrap();
            let (h, w) = p.dims();
            for r in 0..h {
                for c in 0..w {
                    for ch in 0..3 {
                        let src = if m.get(r, c) { &y } else { &p };
                        prop_assert_eq!(out.get(r, c, ch).to_bits(), src.get(r, c, ch).to_bits());
                    }
                }
            }
        }

        #[test]
        fn complements_reconstruct((p, _y, m) in arb_case()) {
            let a = apply_mask_complement(&p, &m).unwrap();
            let b = apply_mask_complement(&p, &m.complement()).unwrap();
            let sum = a.as_array() + b.as_array();
            prop_assert_eq!(&sum, p.as_array());
        }
    }
}
