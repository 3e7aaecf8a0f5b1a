//! Binary element masks and ordered mask sets.

use std::path::Path;

use ::image::{DynamicImage, GrayImage, ImageFormat, Luma};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dims, Error, Result};

/// A dense binary `H x W` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    cells: Array2<bool>,
}

impl BinaryMask {
    pub fn new(cells: Array2<bool>) -> Result<Self> {
        let (h, w) = cells.dim();
        if h == 0 || w == 0 {
            return Err(Error::invalid("mask must be at least 1x1"));
        }
        Ok(Self { cells })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { cells: Array2::from_elem((height.max(1), width.max(1)), false) }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self { cells: Array2::from_elem((height.max(1), width.max(1)), true) }
    }

    pub fn from_fn<F>(height: usize, width: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize) -> bool,
    {
        Self { cells: Array2::from_shape_fn((height.max(1), width.max(1)), |(r, c)| f(r, c)) }
    }

    /// Axis-aligned rectangle `[top, top+h) x [left, left+w)`, clipped to the grid.
    pub fn rect(height: usize, width: usize, top: usize, left: usize, h: usize, w: usize) -> Self {
        Self::from_fn(height, width, |r, c| r >= top && r < top + h && c >= left && c < left + w)
    }

    pub fn height(&self) -> usize {
        self.cells.dim().0
    }

    pub fn width(&self) -> usize {
        self.cells.dim().1
    }

    pub fn dims(&self) -> (usize, usize) {
        self.cells.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[[row, col]]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.cells[[row, col]] = value;
    }

    pub fn cells(&self) -> &Array2<bool> {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&v| v)
    }

    /// Fraction of cells set to 1.
    pub fn area_fraction(&self) -> f64 {
        self.count() as f64 / self.cells.len() as f64
    }

    /// Whether any set cell lies within `margin` pixels of an image edge.
    pub fn touches_boundary(&self, margin: usize) -> bool {
        let (h, w) = self.dims();
        self.cells.indexed_iter().any(|((r, c), &v)| {
            v && (r <= margin || c <= margin || h - 1 - r <= margin || w - 1 - c <= margin)
        })
    }

    /// Inclusive bounding box `(top, left, bottom, right)` of the set cells.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for ((r, c), &v) in self.cells.indexed_iter() {
            if v {
                bbox = Some(match bbox {
                    None => (r, c, r, c),
                    Some((t, l, b, rt)) => (t.min(r), l.min(c), b.max(r), rt.max(c)),
                });
            }
        }
        bbox
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        ensure_dims("mask", self.dims(), other.dims())?;
        let mut cells = self.cells.clone();
        cells.zip_mut_with(&other.cells, |a, &b| *a = f(*a, b));
        Ok(Self { cells })
    }

    pub fn or(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn and(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    /// Cells set here but not in `other`.
    pub fn minus(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn complement(&self) -> Self {
        Self { cells: self.cells.mapv(|v| !v) }
    }

    /// Downsamples (or upsamples) by cell coverage: a target cell is set when at
    /// least half of its footprint is covered. A non-empty mask never resizes
    /// to an empty one; the best-covered cell is kept instead.
    pub fn resize(&self, height: usize, width: usize) -> Self {
        if self.dims() == (height, width) {
            return self.clone();
        }
        let cov = self.coverage(height, width);
        let mut out = Self::from_fn(height, width, |r, c| cov[[r, c]] >= 0.5);
        if out.is_empty() && !self.is_empty() {
            let (best, _) = cov
                .indexed_iter()
                .fold(((0, 0), -1.0), |acc, (idx, &v)| if v > acc.1 { (idx, v) } else { acc });
            out.set(best.0, best.1, true);
        }
        out
    }

    /// Fraction of each cell of an `height x width` grid covered by this mask.
    pub fn coverage(&self, height: usize, width: usize) -> Array2<f64> {
        let (h, w) = self.dims();
        let sy = h as f64 / height as f64;
        let sx = w as f64 / width as f64;
        let mut out = Array2::zeros((height, width));
        for r in 0..height {
            let (y0, y1) = (r as f64 * sy, (r + 1) as f64 * sy);
            for c in 0..width {
                let (x0, x1) = (c as f64 * sx, (c + 1) as f64 * sx);
                let mut acc = 0.0;
                for yy in (y0.floor() as usize)..(y1.ceil() as usize).min(h) {
                    let oy = (y1.min(yy as f64 + 1.0) - y0.max(yy as f64)).max(0.0);
                    for xx in (x0.floor() as usize)..(x1.ceil() as usize).min(w) {
                        if self.cells[[yy, xx]] {
                            let ox = (x1.min(xx as f64 + 1.0) - x0.max(xx as f64)).max(0.0);
                            acc += oy * ox;
                        }
                    }
                }
                out[[r, c]] = acc / (sy * sx);
            }
        }
        out
    }

    /// Single-channel PNG with 0 / 255 cells.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let (h, w) = self.dims();
        let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
            Luma([if self.cells[[y as usize, x as usize]] { 255 } else { 0 }])
        });
        let mut out = std::io::Cursor::new(Vec::new());
        DynamicImage::ImageLuma8(img).write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    /// Reads a single-channel mask; values `>= 128` are set.
    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = ::image::load_from_memory(bytes)?.to_luma8();
        let (w, h) = img.dimensions();
        Self::new(Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
            img.get_pixel(c as u32, r as u32)[0] >= 128
        }))
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode_png(&std::fs::read(path)?)
    }
}

/// One detected element: a 1-based index, a taxonomy label and its mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementMask {
    pub index: usize,
    pub label: u32,
    pub mask: BinaryMask,
}

impl ElementMask {
    pub fn new(index: usize, label: u32, mask: BinaryMask) -> Self {
        Self { index, label, mask }
    }

    pub fn area_fraction(&self) -> f64 {
        self.mask.area_fraction()
    }

    pub fn touches_boundary(&self, margin: usize) -> bool {
        self.mask.touches_boundary(margin)
    }
}

/// The `k` element masks of one image, indexed `1..=k` without gaps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    masks: Vec<ElementMask>,
    dims: (usize, usize),
}

impl MaskSet {
    pub fn empty(dims: (usize, usize)) -> Self {
        Self { masks: Vec::new(), dims }
    }

    /// Assigns indices `1..=k` in order.
    pub fn from_labeled(dims: (usize, usize), masks: Vec<(u32, BinaryMask)>) -> Result<Self> {
        let masks = masks
            .into_iter()
            .enumerate()
            .map(|(i, (label, mask))| ElementMask::new(i + 1, label, mask))
            .collect();
        Self::from_elements(dims, masks)
    }

    /// Checks dimensions and that indices run `1..=k` in order.
    pub fn from_elements(dims: (usize, usize), masks: Vec<ElementMask>) -> Result<Self> {
        for (i, m) in masks.iter().enumerate() {
            ensure_dims("element mask", dims, m.mask.dims())?;
            if m.index != i + 1 {
                return Err(Error::invalid(format!(
                    "mask indices must be 1..k in order; position {} has index {}",
                    i + 1,
                    m.index
                )));
            }
        }
        Ok(Self { masks, dims })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ElementMask> {
        self.masks.iter()
    }

    /// Looks up an element by its 1-based index.
    pub fn get(&self, index: usize) -> Option<&ElementMask> {
        index.checked_sub(1).and_then(|i| self.masks.get(i))
    }

    pub fn as_slice(&self) -> &[ElementMask] {
        &self.masks
    }

    pub fn into_elements(self) -> Vec<ElementMask> {
        self.masks
    }

    /// Resizes every mask with [`BinaryMask::resize`].
    pub fn resize(&self, height: usize, width: usize) -> Self {
        Self {
            masks: self
                .masks
                .iter()
                .map(|m| ElementMask::new(m.index, m.label, m.mask.resize(height, width)))
                .collect(),
            dims: (height, width),
        }
    }
}

impl<'a> IntoIterator for &'a MaskSet {
    type Item = &'a ElementMask;
    type IntoIter = std::slice::Iter<'a, ElementMask>;

    fn into_iter(self) -> Self::IntoIter {
        self.masks.iter()
    }
}

/// Area fraction of an element mask.
pub fn mask_area_fraction(mask: &ElementMask) -> f64 {
    mask.area_fraction()
}

/// Whether an element mask has a set cell within `margin` pixels of the border.
pub fn mask_touches_boundary(mask: &ElementMask, margin: usize) -> bool {
    mask.touches_boundary(margin)
}

/// Parameters of [`validate_mask_set`] and the segmentation post-processing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskFilter {
    pub min_area_fraction: f64,
    pub max_elements: usize,
}

impl Default for MaskFilter {
    fn default() -> Self {
        Self { min_area_fraction: 1e-4, max_elements: 32 }
    }
}

/// Drops masks below `min_area_fraction` and re-indexes the survivors `1..=k`
/// in their original order. Any dimension mismatch with the image is an error.
pub fn validate_mask_set(
    masks: Vec<ElementMask>,
    image_dims: (usize, usize),
    min_area_fraction: f64,
) -> Result<MaskSet> {
    for m in &masks {
        ensure_dims("element mask", image_dims, m.mask.dims())?;
    }
    let kept = masks
        .into_iter()
        .filter(|m| m.area_fraction() >= min_area_fraction)
        .enumerate()
        .map(|(i, m)| ElementMask::new(i + 1, m.label, m.mask))
        .collect();
    MaskSet::from_elements(image_dims, kept)
}

/// Assigns every contested cell to the overlapping mask with the smallest
/// original area; ties go to the earlier mask.
pub fn resolve_overlaps(masks: &mut [ElementMask]) {
    if masks.len() < 2 {
        return;
    }
    let areas: Vec<usize> = masks.iter().map(|m| m.mask.count()).collect();
    let (h, w) = masks[0].mask.dims();
    for r in 0..h {
        for c in 0..w {
            let owners: Vec<usize> = (0..masks.len()).filter(|&i| masks[i].mask.get(r, c)).collect();
            if owners.len() < 2 {
                continue;
            }
            let winner = *owners.iter().min_by_key(|&&i| (areas[i], i)).unwrap();
            for &i in &owners {
                if i != winner {
                    masks[i].mask.set(r, c, false);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn element(index: usize, mask: BinaryMask) -> ElementMask {
        ElementMask::new(index, 1, mask)
    }

    #[test]
    fn area_fraction_counts_cells() {
        assert_eq!(BinaryMask::zeros(10, 10).area_fraction(), 0.0);
        assert_eq!(BinaryMask::ones(10, 10).area_fraction(), 1.0);
        let m = BinaryMask::rect(10, 10, 2, 2, 5, 5);
        assert_eq!(mask_area_fraction(&element(1, m)), 0.25);
    }

    #[test]
    fn boundary_test_matches_definition() {
        let mut corner = BinaryMask::zeros(10, 10);
        corner.set(0, 0, true);
        assert!(mask_touches_boundary(&element(1, corner), 0));

        let mut center = BinaryMask::zeros(101, 101);
        center.set(50, 50, true);
        assert!(!mask_touches_boundary(&element(1, center), 10));

        let mut row5 = BinaryMask::zeros(100, 100);
        row5.set(5, 50, true);
        assert!(mask_touches_boundary(&element(1, row5.clone()), 5));
        assert!(!mask_touches_boundary(&element(1, row5), 4));

        let mut far_edge = BinaryMask::zeros(20, 20);
        far_edge.set(10, 17, true);
        assert!(far_edge.touches_boundary(2));
        assert!(!far_edge.touches_boundary(1));
    }

    #[test]
    fn validate_drops_tiny_masks() {
        let mut tiny = BinaryMask::zeros(100, 100);
        tiny.set(3, 3, true);
        // 1e-4 is the area of a single cell of a 100x100 mask, so go larger.
        let mut tinier = BinaryMask::zeros(1000, 1000);
        tinier.set(3, 3, true);
        let big = BinaryMask::rect(1000, 1000, 10, 10, 100, 100);
        let set = validate_mask_set(vec![element(1, tinier), element(2, big.clone())], (1000, 1000), 1e-4)
            .unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.get(1).unwrap().mask, big);
        assert_eq!(tiny.area_fraction(), 1e-4);
    }

    #[test]
    fn validate_is_identity_on_valid_sets() {
        let a = BinaryMask::rect(20, 20, 0, 0, 5, 5);
        let b = BinaryMask::rect(20, 20, 10, 10, 5, 5);
        let set = MaskSet::from_labeled((20, 20), vec![(3, a), (7, b)]).unwrap();
        let again = validate_mask_set(set.clone().into_elements(), (20, 20), 1e-4).unwrap();
        assert_eq!(again, set);
    }

    #[test]
    fn validate_reindexes_gaps_in_order() {
        let a = BinaryMask::rect(20, 20, 0, 0, 5, 5);
        let b = BinaryMask::rect(20, 20, 10, 10, 5, 5);
        let set = validate_mask_set(
            vec![ElementMask::new(1, 4, a.clone()), ElementMask::new(3, 9, b.clone())],
            (20, 20),
            1e-4,
        )
        .unwrap();
        let got: Vec<_> = set.iter().map(|m| (m.index, m.label)).collect();
        assert_eq!(got, vec![(1, 4), (2, 9)]);
        assert_eq!(set.get(2).unwrap().mask, b);
    }

    #[test]
    fn validate_rejects_dimension_mismatch() {
        let a = BinaryMask::rect(20, 21, 0, 0, 5, 5);
        assert!(matches!(
            validate_mask_set(vec![element(1, a)], (20, 20), 1e-4),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn mask_set_rejects_gapped_indices() {
        let a = BinaryMask::rect(8, 8, 0, 0, 2, 2);
        assert!(MaskSet::from_elements((8, 8), vec![element(2, a)]).is_err());
    }

    #[test]
    fn smaller_mask_wins_overlap() {
        let big = BinaryMask::rect(30, 30, 0, 0, 20, 20);
        let small = BinaryMask::rect(30, 30, 15, 15, 10, 10);
        let mut masks = vec![element(1, big.clone()), element(2, small.clone())];
        resolve_overlaps(&mut masks);
        // Oracle: big loses exactly the intersection, small is untouched.
        let expected_big = big.minus(&small).unwrap();
        assert_eq!(masks[0].mask, expected_big);
        assert_eq!(masks[1].mask, small);
        assert!(masks[0].mask.and(&masks[1].mask).unwrap().is_empty());
    }

    #[test]
    fn resize_keeps_tiny_masks_alive() {
        let mut m = BinaryMask::zeros(64, 64);
        m.set(40, 9, true);
        let small = m.resize(8, 8);
        assert_eq!(small.count(), 1);
        assert!(small.get(5, 1));
        let block = BinaryMask::rect(64, 64, 0, 0, 32, 32);
        let half = block.resize(8, 8);
        assert_eq!(half, BinaryMask::rect(8, 8, 0, 0, 4, 4));
    }

    #[test]
    fn png_round_trip() {
        let m = BinaryMask::from_fn(9, 13, |r, c| (r * c) % 3 == 1);
        assert_eq!(BinaryMask::decode_png(&m.encode_png().unwrap()).unwrap(), m);
    }

    #[test]
    fn bounding_box_is_inclusive() {
        let m = BinaryMask::rect(10, 10, 2, 3, 4, 5);
        assert_eq!(m.bounding_box(), Some((2, 3, 5, 7)));
        assert_eq!(BinaryMask::zeros(3, 3).bounding_box(), None);
    }
}
