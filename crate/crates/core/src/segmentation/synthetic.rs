use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::taxonomy::{LabelTaxonomy, IRREGULAR_STAIN, LINE_SHAPED_CLUTTER};
use super::{finalize, Detection, Segmenter};
use crate::error::Result;
use crate::image::ImageTensor;
use crate::mask::{BinaryMask, MaskFilter, MaskSet};

/// An axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedShape {
    pub label: u32,
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl PlantedShape {
    pub fn mask(&self, dims: (usize, usize)) -> BinaryMask {
        BinaryMask::rect(dims.0, dims.1, self.top, self.left, self.height, self.width)
    }

    fn intersects(&self, other: &Self) -> bool {
        self.top < other.top + other.height
            && other.top < self.top + self.height
            && self.left < other.left + other.width
            && other.left < self.left + self.width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SyntheticMode {
    /// Returns exactly the listed rectangles, whatever the image shows.
    Planted { shapes: Vec<PlantedShape> },
    /// Plants `count` pairwise-disjoint random rectangles derived from `seed`.
    Seeded { seed: u64, count: usize },
    /// Connected regions whose color differs from the border median by
    /// more than `tolerance` in some channel.
    Foreground { tolerance: f32 },
}

/// Deterministic segmenter; the output depends only on the mode, the
/// filter and (for `Foreground`) the image.
#[derive(Debug, Clone)]
pub struct SyntheticSegmenter {
    mode: SyntheticMode,
    filter: MaskFilter,
}

impl SyntheticSegmenter {
    pub fn new(mode: SyntheticMode, filter: MaskFilter) -> Self {
        Self { mode, filter }
    }

    pub fn planted(shapes: Vec<PlantedShape>) -> Self {
        Self::new(SyntheticMode::Planted { shapes }, MaskFilter::default())
    }

    pub fn seeded(seed: u64, count: usize) -> Self {
        Self::new(SyntheticMode::Seeded { seed, count }, MaskFilter::default())
    }

    /// The rectangles this segmenter plants for an image of the given size
    /// (empty for `Foreground`).
    pub fn planted_shapes(&self, dims: (usize, usize)) -> Vec<PlantedShape> {
        match &self.mode {
            SyntheticMode::Planted { shapes } => shapes.clone(),
            SyntheticMode::Seeded { seed, count } => seeded_shapes(*seed, *count, dims),
            SyntheticMode::Foreground { .. } => Vec::new(),
        }
    }

    fn detections(&self, image: &ImageTensor) -> Vec<Detection> {
        let dims = image.dims();
        match &self.mode {
            SyntheticMode::Foreground { tolerance } => foreground_components(image, *tolerance),
            _ => self
                .planted_shapes(dims)
                .into_iter()
                .map(|s| Detection { label: s.label, mask: s.mask(dims), score: 1.0 })
                .collect(),
        }
    }
}

impl Segmenter for SyntheticSegmenter {
    fn segment(&self, image: &ImageTensor) -> Result<MaskSet> {
        finalize(image.dims(), self.detections(image), &self.filter)
    }
}

fn seeded_shapes(seed: u64, count: usize, (h, w): (usize, usize)) -> Vec<PlantedShape> {
    let labels: Vec<u32> = LabelTaxonomy::default().categories.iter().map(|c| c.id).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shapes: Vec<PlantedShape> = Vec::with_capacity(count);
    let min_h = (h / 10).max(1);
    let min_w = (w / 10).max(1);
    let max_h = (h * 3 / 10).max(min_h);
    let max_w = (w * 3 / 10).max(min_w);
    let mut attempts = 0;
    while shapes.len() < count && attempts < 10_000 {
        attempts += 1;
        let height = rng.gen_range(min_h..=max_h);
        let width = rng.gen_range(min_w..=max_w);
        let top = rng.gen_range(0..=h - height);
        let left = rng.gen_range(0..=w - width);
        let label = labels[rng.gen_range(0..labels.len())];
        let shape = PlantedShape { label, top, left, height, width };
        if shapes.iter().all(|s| !s.intersects(&shape)) {
            shapes.push(shape);
        }
    }
    shapes
}

fn median(mut v: Vec<f32>) -> f32 {
    v.sort_by(f32::total_cmp);
    v[v.len() / 2]
}

fn foreground_components(image: &ImageTensor, tolerance: f32) -> Vec<Detection> {
    let (h, w) = image.dims();
    let mut border = [Vec::new(), Vec::new(), Vec::new()];
    for r in 0..h {
        for c in 0..w {
            if r == 0 || c == 0 || r == h - 1 || c == w - 1 {
                for (ch, b) in border.iter_mut().enumerate() {
                    b.push(image.get(r, c, ch));
                }
            }
        }
    }
    let background = border.map(median);
    let fg = BinaryMask::from_fn(h, w, |r, c| {
        (0..3).any(|ch| (image.get(r, c, ch) - background[ch]).abs() > tolerance)
    });

    let mut seen = BinaryMask::zeros(h, w);
    let mut out = Vec::new();
    for r0 in 0..h {
        for c0 in 0..w {
            if !fg.get(r0, c0) || seen.get(r0, c0) {
                continue;
            }
            let mut comp = BinaryMask::zeros(h, w);
            let mut queue = VecDeque::from([(r0, c0)]);
            seen.set(r0, c0, true);
            while let Some((r, c)) = queue.pop_front() {
                comp.set(r, c, true);
                let neighbors = [
                    (r.wrapping_sub(1), c),
                    (r + 1, c),
                    (r, c.wrapping_sub(1)),
                    (r, c + 1),
                ];
                for (nr, nc) in neighbors {
                    if nr < h && nc < w && fg.get(nr, nc) && !seen.get(nr, nc) {
                        seen.set(nr, nc, true);
                        queue.push_back((nr, nc));
                    }
                }
            }
            let (t, l, b, rt) = comp.bounding_box().expect("component is non-empty");
            let (bh, bw) = (b - t + 1, rt - l + 1);
            let elongated = bh.max(bw) >= 4 * bh.min(bw);
            let label = if elongated { LINE_SHAPED_CLUTTER } else { IRREGULAR_STAIN };
            out.push(Detection { label, mask: comp, score: 1.0 });
        }
    }
    out
}
