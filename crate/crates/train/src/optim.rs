//! Gradient clipping, Adam and the epoch loop with early stopping.

use candle_core::backprop::GradStore;
use candle_core::Var;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};

use crate::error::Result;

/// Rescales `gradient` so its Euclidean norm is at most `max_norm`.
pub fn clip_gradients(gradient: &[f64], max_norm: f64) -> Vec<f64> {
    let norm = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm <= max_norm {
        return gradient.to_vec();
    }
    let scale = max_norm / norm;
    gradient.iter().map(|g| g * scale).collect()
}

/// Global-norm clipping of the gradients of `vars` inside a grad store.
/// Returns the norm before clipping.
pub fn clip_grad_store(grads: &mut GradStore, vars: &[Var], max_norm: f64) -> Result<f64> {
    let mut sq = 0.0;
    for v in vars {
        if let Some(g) = grads.get(v) {
            sq += g.sqr()?.sum_all()?.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for v in vars {
            if let Some(g) = grads.remove(v) {
                grads.insert(v, (g * scale)?);
            }
        }
    }
    Ok(norm)
}

/// Adam with the usual moment coefficients and no weight decay.
pub struct Adam {
    inner: AdamW,
    vars: Vec<Var>,
}

impl Adam {
    pub fn new(vars: Vec<Var>, lr: f64) -> Result<Self> {
        let params = ParamsAdamW { lr, weight_decay: 0.0, ..Default::default() };
        Ok(Self { inner: AdamW::new(vars.clone(), params)?, vars })
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Clips the gradients of this optimizer's variables, then steps.
    pub fn clipped_step(&mut self, grads: &mut GradStore, max_norm: f64) -> Result<f64> {
        let norm = clip_grad_store(grads, &self.vars, max_norm)?;
        self.inner.step(grads)?;
        Ok(norm)
    }
}

/// Index of the first strict running minimum.
fn best_index(history: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in history.iter().enumerate() {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// True once the best loss so far was recorded at least `patience` epochs
/// ago.
pub fn early_stop_check(history: &[f64], patience: usize) -> bool {
    match best_index(history) {
        Some(best) => history.len() - 1 - best >= patience,
        None => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRun {
    /// Monitored loss of each completed epoch.
    pub history: Vec<f64>,
    /// 1-based epoch with the lowest monitored loss.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Calls `epoch` with 1-based epoch numbers until `max_epochs` or until
/// the monitored loss it returns stalls for `patience` epochs.
pub fn run_epochs<F>(max_epochs: usize, patience: usize, mut epoch: F) -> Result<EpochRun>
where
    F: FnMut(usize) -> Result<f64>,
{
    let mut history = Vec::new();
    let mut stopped_early = false;
    for e in 1..=max_epochs {
        let loss = epoch(e)?;
        history.push(loss);
        if early_stop_check(&history, patience) {
            stopped_early = e < max_epochs;
            break;
        }
    }
    let best_epoch = best_index(&history).map_or(0, |i| i + 1);
    Ok(EpochRun { history, best_epoch, stopped_early })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clip_examples() {
        assert_eq!(clip_gradients(&[6.0, 8.0], 5.0), vec![3.0, 4.0]);
        assert_eq!(clip_gradients(&[1.0, 0.0], 5.0), vec![1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn clipped_norm_is_min(g in proptest::collection::vec(-100.0f64..100.0, 1..50), max in 0.01f64..50.0) {
            let before = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let after = clip_gradients(&g, max).iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((after - before.min(max)).abs() < 1e-9);
            prop_assert!(after <= max + 1e-9);
        }
    }

    #[test]
    fn early_stop_examples() {
        assert!(!early_stop_check(&[5.0, 4.0, 3.0], 15));
        let mut h = vec![3.0];
        h.extend(std::iter::repeat(3.0).take(14));
        assert!(!early_stop_check(&h, 15));
        h.push(3.5);
        assert!(early_stop_check(&h, 15));
        let decreasing: Vec<f64> = (0..100).map(|i| 100.0 - i as f64).collect();
        assert!(!early_stop_check(&decreasing, 15));
        assert!(!early_stop_check(&[], 1));
    }

    #[test]
    fn constant_loss_halts_after_patience_plus_one() {
        let run = run_epochs(100, 15, |_| Ok(1.0)).unwrap();
        assert_eq!(run.history.len(), 16);
        assert_eq!(run.best_epoch, 1);
        assert!(run.stopped_early);
    }

    #[test]
    fn epochs_never_exceed_best_plus_patience() {
        let losses = [5.0, 4.0, 4.5, 3.0, 3.1, 3.2, 3.3, 3.4, 2.0, 9.0, 9.0, 9.0, 9.0, 9.0, 1.0];
        let run = run_epochs(losses.len(), 5, |e| Ok(losses[e - 1])).unwrap();
        assert_eq!(run.best_epoch, 9);
        assert_eq!(run.history.len(), 14);
        assert!(run.stopped_early);
    }
}
