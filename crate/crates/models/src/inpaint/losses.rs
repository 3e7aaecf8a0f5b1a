//! Training objectives of the inpainting GAN, as differentiable scalars.
//!
//! All tensors are batched: images `(N, 3, H, W)`, masks and confidence
//! maps `(N, 1, H, W)`. The composite `p∘(1−m) + y∘m` is what the critic
//! sees as the fake sample.

use candle_core::Tensor;

use super::discriminator::Critic;
use crate::error::{Error, Result};

fn check_batch(original: &Tensor, generated: &Tensor, mask: &Tensor) -> Result<()> {
    let (n, c, h, w) = original.dims4()?;
    if c != 3 || generated.dims() != original.dims() || mask.dims() != [n, 1, h, w] {
        return Err(Error::invalid(format!(
            "loss inputs disagree: original {:?}, generated {:?}, mask {:?}",
            original.dims(),
            generated.dims(),
            mask.dims()
        )));
    }
    Ok(())
}

/// Original pixels outside the mask, generated pixels inside it.
pub fn composite_batch(original: &Tensor, generated: &Tensor, mask: &Tensor) -> Result<Tensor> {
    check_batch(original, generated, mask)?;
    let keep = mask.affine(-1.0, 1.0)?;
    Ok((original.broadcast_mul(&keep)? + generated.broadcast_mul(mask)?)?)
}

/// `mean|y − p|` over every element.
pub fn reconstruction_loss(original: &Tensor, generated: &Tensor) -> Result<Tensor> {
    Ok((generated - original)?.abs()?.mean_all()?)
}

/// Reconstruction plus `mean(1 − D(composite))`.
pub fn loss_generator(original: &Tensor, generated: &Tensor, mask: &Tensor, critic: &dyn Critic) -> Result<Tensor> {
    let fake = critic.score(&composite_batch(original, generated, mask)?)?;
    let adversarial = fake.affine(-1.0, 1.0)?.mean_all()?;
    Ok((reconstruction_loss(original, generated)? + adversarial)?)
}

/// Batch mean of `(1 − D(p)) + (1 + D(composite))`; with `hinge` each
/// term is clamped at zero.
pub fn loss_discriminator(
    original: &Tensor,
    generated: &Tensor,
    mask: &Tensor,
    critic: &dyn Critic,
    hinge: bool,
) -> Result<Tensor> {
    let real = critic.score(original)?.affine(-1.0, 1.0)?;
    let fake = critic.score(&composite_batch(original, generated, mask)?)?.affine(1.0, 1.0)?;
    let (real, fake) = if hinge { (real.relu()?, fake.relu()?) } else { (real, fake) };
    Ok((real + fake)?.mean_all()?)
}

/// `mean(m ∘ (1 − b) ∘ |y − p|)` over all `N·3·H·W` elements, with `b` and
/// `m` broadcast across channels.
///
/// Its derivative with respect to one cell of `b` is
/// `−m · Σ_channels |y − p| / (N·3·H·W)`.
pub fn loss_confidence(original: &Tensor, generated: &Tensor, confidence: &Tensor, mask: &Tensor) -> Result<Tensor> {
    check_batch(original, generated, mask)?;
    if confidence.dims() != mask.dims() {
        return Err(Error::invalid("confidence map and mask shapes differ"));
    }
    let weight = (mask * confidence.affine(-1.0, 1.0)?)?;
    Ok((generated - original)?.abs()?.broadcast_mul(&weight)?.mean_all()?)
}
