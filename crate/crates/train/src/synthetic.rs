//! Procedural datasets with known answers.
//!
//! Contribution scenes hold flat colored shapes ("good" elements) and
//! patches of pixel-level checkerboard noise over the background ("ugly"
//! elements). A unit-variance blur flattens such a patch back into the
//! background, so its counterfactual really does remove it.
//! Every noise patch lowers the aesthetic label by a fixed margin and
//! every shape raises the content label, so the planting record says which
//! elements should come out as clutter.

use declutter_core::segmentation::IRREGULAR_STAIN;
use declutter_core::{BinaryMask, Category, ImageTensor, MaskSet};
use declutter_models::ScoreModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::ScoreSample;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Good,
    Ugly,
}

impl ElementKind {
    pub fn expected_category(self) -> Category {
        match self {
            ElementKind::Good => Category::Normal,
            ElementKind::Ugly => Category::Clutter,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub sample: ScoreSample,
    pub masks: MaskSet,
    pub kinds: Vec<ElementKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecipe {
    pub side: usize,
    /// Good and ugly counts are drawn independently from `1..=max`, so
    /// neither count predicts the other.
    pub max_good: usize,
    pub max_ugly: usize,
    pub min_extent: usize,
    pub max_extent: usize,
    pub base_aes: f64,
    pub ugly_penalty: f64,
    pub base_content: f64,
    /// Content gain per good element. Zero by default: the blur leaves flat
    /// shapes visible, so their counterfactuals carry no content signal and
    /// a nonzero bonus only teaches the content head spurious cues.
    pub good_bonus: f64,
    /// Peak deviation of the noise patches from the background.
    pub noise_amplitude: f32,
}

impl Default for SceneRecipe {
    fn default() -> Self {
        Self {
            side: 64,
            max_good: 2,
            max_ugly: 2,
            min_extent: 12,
            max_extent: 22,
            base_aes: 0.8,
            ugly_penalty: 0.15,
            base_content: 0.3,
            good_bonus: 0.0,
            noise_amplitude: 0.35,
        }
    }
}

type Rect = (usize, usize, usize, usize);

fn disjoint(a: Rect, b: Rect, gap: usize) -> bool {
    a.0 + a.2 + gap <= b.0 || b.0 + b.2 + gap <= a.0 || a.1 + a.3 + gap <= b.1 || b.1 + b.3 + gap <= a.1
}

fn place(rng: &mut ChaCha8Rng, recipe: &SceneRecipe, count: usize) -> Vec<Rect> {
    loop {
        let mut rects: Vec<Rect> = Vec::with_capacity(count);
        for _ in 0..200 {
            if rects.len() == count {
                break;
            }
            let h = rng.gen_range(recipe.min_extent..=recipe.max_extent);
            let w = rng.gen_range(recipe.min_extent..=recipe.max_extent);
            let r = (rng.gen_range(0..=recipe.side - h), rng.gen_range(0..=recipe.side - w), h, w);
            if rects.iter().all(|&o| disjoint(o, r, 2)) {
                rects.push(r);
            }
        }
        if rects.len() == count {
            return rects;
        }
    }
}

fn saturated_color(rng: &mut ChaCha8Rng) -> [f32; 3] {
    let mut c = [rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.3)];
    c[rng.gen_range(0..3)] = rng.gen_range(0.75..1.0);
    c
}

/// A smooth two-color gradient background.
fn background(rng: &mut ChaCha8Rng, side: usize) -> Vec<[f32; 3]> {
    let a: [f32; 3] = [rng.gen_range(0.35..0.65), rng.gen_range(0.35..0.65), rng.gen_range(0.35..0.65)];
    let b: [f32; 3] = [rng.gen_range(0.35..0.65), rng.gen_range(0.35..0.65), rng.gen_range(0.35..0.65)];
    (0..side * side)
        .map(|i| {
            let t = ((i / side) + (i % side)) as f32 / (2 * side) as f32;
            [0, 1, 2].map(|ch| a[ch] * (1.0 - t) + b[ch] * t)
        })
        .collect()
}

/// Generates `n` scenes, each with at least one good and one ugly element.
pub fn contribution_scenes(n: usize, seed: u64, recipe: &SceneRecipe) -> Result<Vec<SyntheticScene>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = recipe.side;
    (0..n)
        .map(|_| {
            let good = rng.gen_range(1..=recipe.max_good.max(1));
            let ugly = rng.gen_range(1..=recipe.max_ugly.max(1));
            let mut kinds = vec![ElementKind::Good; good];
            kinds.extend(vec![ElementKind::Ugly; ugly]);
            kinds.shuffle_with(&mut rng);
            let k = kinds.len();
            let rects = place(&mut rng, recipe, k);
            let mut pixels = background(&mut rng, side);
            let mut labeled = Vec::with_capacity(k);
            for (&(top, left, h, w), kind) in rects.iter().zip(&kinds) {
                let color = saturated_color(&mut rng);
                for r in top..top + h {
                    for c in left..left + w {
                        let i = r * side + c;
                        pixels[i] = match kind {
                            ElementKind::Good => color,
                            ElementKind::Ugly => {
                                let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
                                let amp = sign * recipe.noise_amplitude * rng.gen_range(0.6f32..1.0);
                                pixels[i].map(|v| (v + amp).clamp(0.0, 1.0))
                            }
                        };
                    }
                }
                let label = match kind {
                    ElementKind::Good => rng.gen_range(1..=20),
                    ElementKind::Ugly => IRREGULAR_STAIN,
                };
                labeled.push((label, BinaryMask::rect(side, side, top, left, h, w)));
            }
            let image = ImageTensor::from_fn(side, side, |r, c, ch| pixels[r * side + c][ch])?;
            let masks = MaskSet::from_labeled((side, side), labeled)?;
            let ugly = kinds.iter().filter(|k| **k == ElementKind::Ugly).count() as f64;
            let good = kinds.len() as f64 - ugly;
            let sample = ScoreSample {
                image,
                masks: Some(masks.clone()),
                y_aes: (recipe.base_aes - recipe.ugly_penalty * ugly).clamp(0.0, 1.0),
                y_content: (recipe.base_content + recipe.good_bonus * good).clamp(0.0, 1.0),
            };
            Ok(SyntheticScene { sample, masks, kinds })
        })
        .collect()
}

trait ShuffleWith {
    fn shuffle_with(&mut self, rng: &mut ChaCha8Rng);
}

impl<T> ShuffleWith for Vec<T> {
    fn shuffle_with(&mut self, rng: &mut ChaCha8Rng) {
        use rand::seq::SliceRandom;
        self.shuffle(rng);
    }
}

/// Share of elements whose predicted category matches the planting record:
/// `(matched, total)`.
pub fn sign_recovery(model: &ScoreModel, scenes: &[SyntheticScene]) -> Result<(usize, usize)> {
    let mut matched = 0;
    let mut total = 0;
    for scene in scenes {
        let assessment = model.analyze_scene(&scene.sample.image, &scene.masks)?;
        for (category, kind) in assessment.categories.iter().zip(&scene.kinds) {
            total += 1;
            matched += usize::from(*category == kind.expected_category());
        }
    }
    Ok((matched, total))
}

/// Smooth images with a few flat shapes, plus the shapes as object masks.
pub fn inpaint_corpus(n: usize, side: usize, seed: u64) -> Result<(Vec<ImageTensor>, Vec<BinaryMask>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let recipe = SceneRecipe {
        side,
        min_extent: (side / 6).max(2),
        max_extent: (side / 3).max(3),
        ..Default::default()
    };
    let mut images = Vec::with_capacity(n);
    let mut masks = Vec::new();
    for _ in 0..n {
        let mut pixels = background(&mut rng, side);
        let count = rng.gen_range(1..=3);
        for (top, left, h, w) in place(&mut rng, &recipe, count) {
            let color = saturated_color(&mut rng);
            for r in top..top + h {
                for c in left..left + w {
                    pixels[r * side + c] = color;
                }
            }
            masks.push(BinaryMask::rect(side, side, top, left, h, w));
        }
        images.push(ImageTensor::from_fn(side, side, |r, c, ch| pixels[r * side + c][ch])?);
    }
    Ok((images, masks))
}
