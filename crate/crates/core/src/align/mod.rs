//! Contrastive cross-paradigm alignment.
//!
//! A target paradigm's alignment module is trained so that, for the same
//! instance, its unified vector lands next to the frozen anchor module's
//! vector and away from anchor vectors of other instances.

mod train;

use rand::Rng;
use thiserror::Error;

pub use train::{evaluate_alignment, train_alignment, AlignConfig, AlignEval, AlignTrainReport};

use crate::space::{SpaceError, UnifiedVector};
use crate::tensor::{dot, norm};

/// Norms below this are treated as zero and give cosine 0.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignError {
    #[error("negative set is empty")]
    EmptyNegatives,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("cannot draw {requested} negatives from a pool of {pool} with one excluded")]
    TooManyNegatives { requested: usize, pool: usize },
    #[error("invalid alignment config: {0}")]
    Config(String),
    #[error("anchor and target state lists differ in length ({anchor} vs {target})")]
    LengthMismatch { anchor: usize, target: usize },
    #[error("state {index} belongs to paradigm {found}, expected {expected}")]
    ParadigmMismatch { index: usize, expected: String, found: String },
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Cosine similarity of two slices; 0 when either norm is below [`ZERO_NORM`].
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let (nu, nv) = (norm(u), norm(v));
    if nu < ZERO_NORM || nv < ZERO_NORM {
        return 0.0;
    }
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

pub fn cosine_sim(u: &UnifiedVector, v: &UnifiedVector) -> Result<f64, AlignError> {
    if u.dim() != v.dim() {
        return Err(SpaceError::DimensionMismatch { expected: u.dim(), found: v.dim() }.into());
    }
    Ok(cosine(u.values(), v.values()))
}

/// `∂ cos(a, b) / ∂b`.
pub(crate) fn cosine_grad_wrt_second(a: &[f64], b: &[f64]) -> Vec<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na < ZERO_NORM || nb < ZERO_NORM {
        return vec![0.0; b.len()];
    }
    let c = dot(a, b) / (na * nb);
    a.iter().zip(b).map(|(ai, bi)| ai / (na * nb) - c * bi / (nb * nb)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoNceOutput {
    pub loss: f64,
    /// `∂loss/∂h_t`. Negatives come from the frozen anchor side and get no
    /// gradient.
    pub grad_target: Vec<f64>,
    /// Softmax weight of the positive pair.
    pub positive_prob: f64,
}

/// `−log( e^{s⁺/τ} / (e^{s⁺/τ} + Σ_neg e^{s⁻/τ}) )` with `s⁺ = cos(h_a, h_t)`
/// and `s⁻ = cos(h_a, h)` for each negative `h`.
pub fn infonce_loss(
    anchor: &[f64],
    target: &[f64],
    negatives: &[&[f64]],
    tau: f64,
) -> Result<InfoNceOutput, AlignError> {
    if negatives.is_empty() {
        return Err(AlignError::EmptyNegatives);
    }
    if !(tau > 0.0) {
        return Err(AlignError::NonPositiveTemperature(tau));
    }
    if anchor.len() != target.len() {
        return Err(SpaceError::DimensionMismatch { expected: anchor.len(), found: target.len() }.into());
    }
    if let Some(bad) = negatives.iter().find(|n| n.len() != anchor.len()) {
        return Err(SpaceError::DimensionMismatch { expected: anchor.len(), found: bad.len() }.into());
    }

    let pos = cosine(anchor, target) / tau;
    let negs: Vec<f64> = negatives.iter().map(|n| cosine(anchor, n) / tau).collect();
    let max = negs.iter().copied().fold(pos, f64::max);
    // loss = (max − pos) + ln Σ e^{l − max}; when the positive is the max this
    // is ln(1 + Σ e^{l⁻ − pos}), evaluated with ln_1p to stay ≥ 0.
    let (loss, positive_prob) = if max == pos {
        let tail: f64 = negs.iter().map(|l| (l - pos).exp()).sum();
        (tail.ln_1p(), 1.0 / (1.0 + tail))
    } else {
        let total: f64 = (pos - max).exp() + negs.iter().map(|l| (l - max).exp()).sum::<f64>();
        ((max - pos) + total.ln(), (pos - max).exp() / total)
    };
    let dloss_dsim = (positive_prob - 1.0) / tau;
    let grad_target = cosine_grad_wrt_second(anchor, target)
        .into_iter()
        .map(|g| g * dloss_dsim)
        .collect();
    Ok(InfoNceOutput { loss, grad_target, positive_prob })
}

/// Draws `count` distinct indices uniformly from `0..pool_size` without
/// `exclude`.
pub fn sample_negatives<R: Rng + ?Sized>(
    pool_size: usize,
    exclude: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>, AlignError> {
    if pool_size == 0 || count > pool_size - 1 || exclude >= pool_size {
        return Err(AlignError::TooManyNegatives { requested: count, pool: pool_size });
    }
    Ok(rand::seq::index::sample(rng, pool_size - 1, count)
        .into_iter()
        .map(|i| if i >= exclude { i + 1 } else { i })
        .collect())
}
