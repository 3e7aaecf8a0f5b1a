use declutter_core::{apply_mask_complement, composite, BinaryMask, ImageTensor};
use serde::{Deserialize, Serialize};

use super::{ConfidenceMap, Inpainter};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InpaintOptions {
    pub max_iterations: usize,
    /// Missing pixels whose confidence value is at most this are accepted.
    pub accept_threshold: f32,
    /// Lower bound on the share of the remaining missing pixels accepted in
    /// each iteration, taken in ascending order of confidence value.
    pub min_accept_fraction: f64,
}

impl Default for InpaintOptions {
    fn default() -> Self {
        Self { max_iterations: 5, accept_threshold: 0.5, min_accept_fraction: 0.1 }
    }
}

impl InpaintOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.accept_threshold > 0.0 && self.accept_threshold < 1.0) {
            return Err(Error::invalid("accept_threshold must lie in (0, 1)"));
        }
        if !(self.min_accept_fraction > 0.0 && self.min_accept_fraction <= 1.0) {
            return Err(Error::invalid("min_accept_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub accepted: BinaryMask,
    pub confidence: ConfidenceMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintResult {
    pub final_image: ImageTensor,
    pub iterations_used: usize,
    pub per_iteration: Vec<IterationRecord>,
    /// Pixels still missing at the end; empty whenever the loop completes.
    pub residual_mask: BinaryMask,
}

impl InpaintResult {
    /// Union of the accepted masks over all iterations.
    pub fn filled_mask(&self) -> BinaryMask {
        let (h, w) = self.final_image.dims();
        self.per_iteration
            .iter()
            .fold(BinaryMask::zeros(h, w), |acc, it| acc.or(&it.accepted).expect("same dims"))
    }

    /// Confidence map of the last iteration, if any ran.
    pub fn last_confidence(&self) -> Option<&ConfidenceMap> {
        self.per_iteration.last().map(|it| &it.confidence)
    }
}

/// Which missing pixels to accept this round.
fn select_accepted(missing: &BinaryMask, confidence: &ConfidenceMap, options: &InpaintOptions, last: bool) -> BinaryMask {
    if last {
        return missing.clone();
    }
    let b = confidence.values();
    let mut accepted = BinaryMask::from_fn(missing.height(), missing.width(), |r, c| {
        missing.get(r, c) && b[[r, c]] <= options.accept_threshold
    });
    let remaining = missing.count();
    let floor = ((remaining as f64 * options.min_accept_fraction).ceil() as usize).clamp(1, remaining);
    if accepted.count() < floor {
        let mut cells: Vec<(f32, usize, usize)> = missing
            .cells()
            .indexed_iter()
            .filter(|(_, &m)| m)
            .map(|((r, c), _)| (b[[r, c]], r, c))
            .collect();
        cells.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
        for &(_, r, c) in cells.iter().take(floor) {
            accepted.set(r, c, true);
        }
    }
    accepted
}

/// Progressive fill: each round regenerates the still-missing region,
/// keeps the pixels the generator is confident about and retries the rest.
/// At `max_iterations` everything left is accepted.
pub fn iterative_inpaint(
    image: &ImageTensor,
    clutter: &BinaryMask,
    inpainter: &dyn Inpainter,
    options: &InpaintOptions,
) -> Result<InpaintResult> {
    options.validate()?;
    if clutter.dims() != image.dims() {
        return Err(Error::invalid("clutter mask and image dimensions differ"));
    }
    let mut current = image.clone();
    let mut missing = clutter.clone();
    let mut per_iteration = Vec::new();
    for iteration in 1..=options.max_iterations {
        if missing.is_empty() {
            break;
        }
        let corrupted = apply_mask_complement(&current, &missing)?;
        let (generated, confidence) = inpainter.generate(&corrupted, &missing)?;
        if generated.dims() != image.dims() || confidence.dims() != image.dims() {
            return Err(Error::invalid("inpainter returned outputs of the wrong size"));
        }
        let accepted = select_accepted(&missing, &confidence, options, iteration == options.max_iterations);
        current = composite(&current, &generated, &accepted)?;
        missing = missing.minus(&accepted)?;
        per_iteration.push(IterationRecord { accepted, confidence });
    }
    Ok(InpaintResult {
        final_image: current,
        iterations_used: per_iteration.len(),
        per_iteration,
        residual_mask: missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    struct Fixed(f32);

    impl Inpainter for Fixed {
        fn generate(&self, corrupted: &ImageTensor, _mask: &BinaryMask) -> Result<(ImageTensor, ConfidenceMap)> {
            let (h, w) = corrupted.dims();
            Ok((ImageTensor::filled(h, w, 0.9)?, ConfidenceMap::new(Array2::from_elem((h, w), self.0))?))
        }
    }

    fn img() -> ImageTensor {
        ImageTensor::from_fn(16, 16, |r, c, ch| ((r + c + ch) % 5) as f32 / 4.0).unwrap()
    }

    #[test]
    fn empty_mask_is_a_no_op() {
        let r = iterative_inpaint(&img(), &BinaryMask::zeros(16, 16), &Fixed(0.0), &InpaintOptions::default()).unwrap();
        assert_eq!(r.final_image, img());
        assert_eq!(r.iterations_used, 0);
        assert!(r.per_iteration.is_empty());
    }

    #[test]
    fn confident_generator_finishes_in_one_round() {
        let m = BinaryMask::rect(16, 16, 2, 2, 6, 6);
        let r = iterative_inpaint(&img(), &m, &Fixed(0.0), &InpaintOptions::default()).unwrap();
        assert_eq!(r.iterations_used, 1);
        assert_eq!(r.per_iteration[0].accepted, m);
        assert!(r.residual_mask.is_empty());
    }

    #[test]
    fn single_iteration_forces_acceptance() {
        let m = BinaryMask::rect(16, 16, 2, 2, 6, 6);
        let opts = InpaintOptions { max_iterations: 1, ..Default::default() };
        let r = iterative_inpaint(&img(), &m, &Fixed(1.0), &opts).unwrap();
        assert_eq!(r.iterations_used, 1);
        assert_eq!(r.filled_mask(), m);
    }

    #[test]
    fn unconfident_generator_still_shrinks_the_hole() {
        let m = BinaryMask::rect(16, 16, 0, 0, 10, 10);
        let r = iterative_inpaint(&img(), &m, &Fixed(0.99), &InpaintOptions::default()).unwrap();
        assert_eq!(r.iterations_used, 5);
        let mut remaining = m.count();
        for it in &r.per_iteration {
            assert!(it.accepted.count() >= 1);
            remaining -= it.accepted.count();
        }
        assert_eq!(remaining, 0);
        assert_eq!(r.filled_mask(), m);
    }

    #[test]
    fn invalid_options_are_rejected() {
        let m = BinaryMask::zeros(16, 16);
        for opts in [
            InpaintOptions { max_iterations: 0, ..Default::default() },
            InpaintOptions { accept_threshold: 1.0, ..Default::default() },
            InpaintOptions { min_accept_fraction: 0.0, ..Default::default() },
        ] {
            assert!(iterative_inpaint(&img(), &m, &Fixed(0.0), &opts).is_err());
        }
    }
}
