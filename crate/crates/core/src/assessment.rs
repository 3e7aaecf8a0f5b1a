//! Scene-level scoring arithmetic: weighted aggregation of per-element
//! scores, per-element contributions and the regression loss.
//!
//! For a scene with `k` elements, element `i` has scores `(aes_i, content_i)`
//! computed on the image with that element blurred, and softmax weights
//! `beta_i`, `gamma_i`. The overall scores are
//!
//! ```text
//! s_aes = Σ beta_i · aes_i          s_content = Σ gamma_i · content_i
//! ```
//!
//! and the contribution of element `i` is
//!
//! ```text
//! q_i = beta_i (s_aes − aes_i) + gamma_i (s_content − content_i)
//! ```
//!
//! Elements with `q_i < 0` lower the overall quality and are clutter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Clutter,
    Normal,
}

impl Category {
    /// Negative contributions are clutter; zero is not negative.
    pub fn from_contribution(q: f64) -> Self {
        if q < 0.0 {
            Category::Clutter
        } else {
            Category::Normal
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Category::Clutter => Category::Normal,
            Category::Normal => Category::Clutter,
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Category::Clutter => "clutter",
            Category::Normal => "normal",
        })
    }
}

impl std::str::FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clutter" => Ok(Category::Clutter),
            "normal" => Ok(Category::Normal),
            other => Err(Error::invalid(format!("unknown category {other:?}"))),
        }
    }
}

/// Scores of one counterfactual sub-image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementScores {
    pub aes: f64,
    pub content: f64,
}

impl ElementScores {
    pub fn new(aes: f64, content: f64) -> Self {
        Self { aes, content }
    }
}

/// Softmax-normalized mixing weights, one entry per element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingWeights {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl MixingWeights {
    pub fn new(beta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if beta.len() != gamma.len() {
            return Err(Error::invalid(format!(
                "beta has {} entries, gamma has {}",
                beta.len(),
                gamma.len()
            )));
        }
        Ok(Self { beta, gamma })
    }

    /// Equal weights `1/k`.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyScene);
        }
        let w = vec![1.0 / k as f64; k];
        Ok(Self { beta: w.clone(), gamma: w })
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

/// Numerically stable softmax. A single logit maps to exactly `1.0`.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Applies [`softmax`] to each head's logits.
pub fn weights_from_logits(beta_logits: &[f64], gamma_logits: &[f64]) -> Result<MixingWeights> {
    if beta_logits.is_empty() {
        return Err(Error::EmptyScene);
    }
    MixingWeights::new(softmax(beta_logits), softmax(gamma_logits))
}

fn check_lengths(scores: &[ElementScores], weights: &MixingWeights) -> Result<()> {
    if scores.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} element scores but {} weights",
            scores.len(),
            weights.len()
        )));
    }
    Ok(())
}

/// Overall `(s_aes, s_content)` as weighted sums of the element scores.
pub fn aggregate_scores(scores: &[ElementScores], weights: &MixingWeights) -> Result<(f64, f64)> {
    check_lengths(scores, weights)?;
    let aes = scores.iter().zip(&weights.beta).map(|(s, b)| b * s.aes).sum();
    let content = scores.iter().zip(&weights.gamma).map(|(s, g)| g * s.content).sum();
    Ok((aes, content))
}

/// Per-element contributions `q_i` given the overall scores.
pub fn contributions(
    scores: &[ElementScores],
    weights: &MixingWeights,
    overall: (f64, f64),
) -> Result<Vec<f64>> {
    check_lengths(scores, weights)?;
    let (s_aes, s_content) = overall;
    Ok(scores
        .iter()
        .zip(weights.beta.iter().zip(&weights.gamma))
        .map(|(s, (b, g))| b * (s_aes - s.aes) + g * (s_content - s.content))
        .collect())
}

/// `λ_aes · mean((y_aes − s_aes)²) + mean((y_content − s_content)²)` over a
/// batch of `(aes, content)` predictions and labels.
pub fn total_loss(predictions: &[(f64, f64)], labels: &[(f64, f64)], lambda_aes: f64) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if !(lambda_aes >= 0.0) {
        return Err(Error::invalid("lambda_aes must be non-negative"));
    }
    let n = predictions.len() as f64;
    let (mut aes, mut content) = (0.0, 0.0);
    for ((pa, pc), (ya, yc)) in predictions.iter().zip(labels) {
        aes += (ya - pa).powi(2);
        content += (yc - pc).powi(2);
    }
    Ok(lambda_aes * aes / n + content / n)
}

/// Everything the model concludes about one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneAssessment {
    pub element_scores: Vec<ElementScores>,
    pub weights: MixingWeights,
    pub overall_aes: f64,
    pub overall_content: f64,
    pub contributions: Vec<f64>,
    pub categories: Vec<Category>,
}

impl SceneAssessment {
    /// Aggregates, computes contributions and classifies by the sign of `q`.
    pub fn from_parts(element_scores: Vec<ElementScores>, weights: MixingWeights) -> Result<Self> {
        if element_scores.is_empty() {
            return Err(Error::EmptyScene);
        }
        if let Some(s) = element_scores.iter().find(|s| !s.aes.is_finite() || !s.content.is_finite()) {
            return Err(Error::invalid(format!("non-finite element score {s:?}")));
        }
        let (overall_aes, overall_content) = aggregate_scores(&element_scores, &weights)?;
        let contributions = contributions(&element_scores, &weights, (overall_aes, overall_content))?;
        let categories = contributions.iter().map(|&q| Category::from_contribution(q)).collect();
        Ok(Self { element_scores, weights, overall_aes, overall_content, contributions, categories })
    }

    pub fn len(&self) -> usize {
        self.element_scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.element_scores.is_empty()
    }

    /// Whether the stored overall scores agree with the aggregation of the
    /// stored element scores within `tol`.
    pub fn is_consistent(&self, tol: f64) -> bool {
        match aggregate_scores(&self.element_scores, &self.weights) {
            Ok((a, c)) => (a - self.overall_aes).abs() <= tol && (c - self.overall_content).abs() <= tol,
            Err(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(pairs: &[(f64, f64)]) -> Vec<ElementScores> {
        pairs.iter().map(|&(a, c)| ElementScores::new(a, c)).collect()
    }

    #[test]
    fn aggregate_examples() {
        let w = MixingWeights::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        assert_eq!(aggregate_scores(&scores(&[(4.0, 0.0), (6.0, 0.0)]), &w).unwrap().0, 5.0);

        let w = MixingWeights::new(vec![1.0], vec![1.0]).unwrap();
        assert_eq!(aggregate_scores(&scores(&[(0.3, 0.7)]), &w).unwrap(), (0.3, 0.7));

        let w = MixingWeights::new(vec![0.2, 0.3, 0.5], vec![1.0 / 3.0; 3]).unwrap();
        let (s, _) = aggregate_scores(&scores(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]), &w).unwrap();
        assert!((s - 2.3).abs() < 1e-12);
    }

    #[test]
    fn aggregate_rejects_length_mismatch() {
        let w = MixingWeights::uniform(3).unwrap();
        assert!(aggregate_scores(&scores(&[(1.0, 1.0)]), &w).is_err());
        assert!(MixingWeights::new(vec![1.0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn worked_two_element_contributions() {
        let s = scores(&[(4.0, 2.0), (6.0, 2.0)]);
        let w = MixingWeights::uniform(2).unwrap();
        let overall = aggregate_scores(&s, &w).unwrap();
        assert_eq!(overall, (5.0, 2.0));
        let q = contributions(&s, &w, overall).unwrap();
        assert!((q[0] - 0.5).abs() < 1e-12);
        assert!((q[1] + 0.5).abs() < 1e-12);
        let a = SceneAssessment::from_parts(s, w).unwrap();
        assert_eq!(a.categories, vec![Category::Normal, Category::Clutter]);
    }

    #[test]
    fn single_element_has_zero_contribution() {
        let a = SceneAssessment::from_parts(scores(&[(0.37, 0.91)]), weights_from_logits(&[2.5], &[-1.0]).unwrap())
            .unwrap();
        assert_eq!(a.weights.beta, vec![1.0]);
        assert_eq!(a.contributions, vec![0.0]);
        assert_eq!(a.categories, vec![Category::Normal]);
    }

    #[test]
    fn softmax_matches_direct_computation() {
        let w = weights_from_logits(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (i, l) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((w.beta[i] - l.exp() / z).abs() < 1e-15);
        }
        assert_eq!(w.gamma, vec![1.0 / 3.0; 3]);
        assert!(matches!(weights_from_logits(&[], &[]), Err(Error::EmptyScene)));
    }

    #[test]
    fn zero_is_not_clutter() {
        assert_eq!(Category::from_contribution(0.0), Category::Normal);
        assert_eq!(Category::from_contribution(-0.0), Category::Normal);
        assert_eq!(Category::from_contribution(-1e-300), Category::Clutter);
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(&[(0.3, 0.4)], &[(0.3, 0.4)], 1.0).unwrap(), 0.0);
        assert_eq!(total_loss(&[(0.0, 0.0)], &[(1.0, 2.0)], 1.0).unwrap(), 5.0);
        assert!(total_loss(&[(0.0, 0.0)], &[], 1.0).is_err());
        assert!(total_loss(&[(0.0, 0.0)], &[(1.0, 1.0)], -1.0).is_err());
    }

    #[test]
    fn total_loss_matches_scalar_loop() {
        let preds = [(0.1, 0.9), (0.5, 0.2), (0.7, 0.7), (0.0, 0.3)];
        let labels = [(0.2, 0.8), (0.4, 0.4), (1.0, 0.5), (0.25, 0.0)];
        let lambda = 0.7;
        let mut la = 0.0;
        let mut lc = 0.0;
        for i in 0..4 {
            la += (labels[i].0 - preds[i].0) * (labels[i].0 - preds[i].0);
            lc += (labels[i].1 - preds[i].1) * (labels[i].1 - preds[i].1);
        }
        let expected = lambda * la / 4.0 + lc / 4.0;
        assert!((total_loss(&preds, &labels, lambda).unwrap() - expected).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn shifting_all_scores_leaves_contributions(
            logits in proptest::collection::vec(-5.0f64..5.0, 1..12),
            base in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 12),
            c in -10.0f64..10.0,
        ) {
            let k = logits.len();
            let w = weights_from_logits(&logits, &logits.iter().rev().copied().collect::<Vec<_>>()).unwrap();
            let s = scores(&base[..k]);
            let shifted: Vec<_> = s.iter().map(|e| ElementScores::new(e.aes + c, e.content - c)).collect();
            let q0 = contributions(&s, &w, aggregate_scores(&s, &w).unwrap()).unwrap();
            let q1 = contributions(&shifted, &w, aggregate_scores(&shifted, &w).unwrap()).unwrap();
            for (a, b) in q0.iter().zip(&q1) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn equal_scores_give_zero_contributions(
            logits in proptest::collection::vec(-5.0f64..5.0, 1..12), a in -2.0f64..2.0, c in -2.0f64..2.0
        ) {
            let w = weights_from_logits(&logits, &logits).unwrap();
            let s = vec![ElementScores::new(a, c); logits.len()];
            let q = contributions(&s, &w, aggregate_scores(&s, &w).unwrap()).unwrap();
            for v in q {
                prop_assert!(v.abs() < 1e-12);
            }
        }
    }
}
