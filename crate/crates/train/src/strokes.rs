//! Random free-form stroke masks for corrupting training images.

use declutter_core::BinaryMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrokeMaskSpec {
    pub min_strokes: usize,
    pub max_strokes: usize,
    /// Stroke widths as fractions of `min(H, W)`.
    pub min_width_fraction: f64,
    pub max_width_fraction: f64,
    /// Vertices per polyline stroke.
    pub max_vertices: usize,
    /// Strokes that would push the covered area past this fraction are
    /// skipped.
    pub max_total_fraction: f64,
    pub seed: u64,
}

impl Default for StrokeMaskSpec {
    fn default() -> Self {
        Self {
            min_strokes: 1,
            max_strokes: 5,
            min_width_fraction: 0.02,
            max_width_fraction: 0.08,
            max_vertices: 5,
            max_total_fraction: 0.25,
            seed: 0,
        }
    }
}

impl StrokeMaskSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_strokes > self.max_strokes {
            return Err(Error::invalid("min_strokes exceeds max_strokes"));
        }
        if !(self.min_width_fraction > 0.0 && self.min_width_fraction <= self.max_width_fraction) {
            return Err(Error::invalid("stroke width fractions must satisfy 0 < min <= max"));
        }
        if self.max_vertices < 2 {
            return Err(Error::invalid("a stroke needs at least two vertices"));
        }
        if !(self.max_total_fraction > 0.0 && self.max_total_fraction < 1.0) {
            return Err(Error::invalid("max_total_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

fn distance_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

fn rasterize(height: usize, width: usize, vertices: &[(f64, f64)], thickness: f64) -> BinaryMask {
    let half = thickness / 2.0;
    let mut mask = BinaryMask::zeros(height, width);
    for seg in vertices.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let r0 = (a.0.min(b.0) - half).floor().max(0.0) as usize;
        let r1 = ((a.0.max(b.0) + half).ceil() as usize).min(height - 1);
        let c0 = (a.1.min(b.1) - half).floor().max(0.0) as usize;
        let c1 = ((a.1.max(b.1) + half).ceil() as usize).min(width - 1);
        for r in r0..=r1 {
            for c in c0..=c1 {
                if distance_to_segment((r as f64 + 0.5, c as f64 + 0.5), a, b) <= half {
                    mask.set(r, c, true);
                }
            }
        }
    }
    mask
}

/// Draws between `min_strokes` and `max_strokes` thick polylines. The
/// result depends only on the dimensions and the spec (including its
/// seed) and never covers more than `max_total_fraction` of the image.
pub fn random_stroke_mask(height: usize, width: usize, spec: &StrokeMaskSpec) -> Result<BinaryMask> {
    spec.validate()?;
    if height == 0 || width == 0 {
        return Err(Error::invalid("mask dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let side = height.min(width) as f64;
    let cap = (spec.max_total_fraction * (height * width) as f64).floor() as usize;
    let mut mask = BinaryMask::zeros(height, width);
    let strokes = rng.gen_range(spec.min_strokes..=spec.max_strokes);
    for _ in 0..strokes {
        let thickness = (side * rng.gen_range(spec.min_width_fraction..=spec.max_width_fraction)).max(1.0);
        let n_vertices = rng.gen_range(2..=spec.max_vertices);
        let mut p = (rng.gen_range(0.0..height as f64), rng.gen_range(0.0..width as f64));
        let mut vertices = vec![p];
        for _ in 1..n_vertices {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let length = rng.gen_range(0.1..0.4) * side;
            p = (
                (p.0 + length * angle.sin()).clamp(0.0, height as f64),
                (p.1 + length * angle.cos()).clamp(0.0, width as f64),
            );
            vertices.push(p);
        }
        let candidate = mask.or(&rasterize(height, width, &vertices, thickness))?;
        if candidate.count() <= cap {
            mask = candidate;
        }
    }
    Ok(mask)
}
