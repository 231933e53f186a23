//! Soft targets and the DCE/TC/TC-λ loss family, with exact gradients with
//! respect to logits.
//!
//! Targets follow the backward recursion `z_T = δ_y`,
//! `z_t = λ z_{t+1} + (1 - λ) p'(· | s_{t+1})`, where `p'` is a reference
//! (stop-gradient) model. `λ = 1` reduces to hard labels at every step
//! (DCE); `λ = 0` reduces to next-step reference distributions (TC).

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probabilities are clamped to at least this value inside logarithms so the
/// entropy functions are total. With `f32` the clamp degrades to the type's
/// smallest positive value.
pub const LOG_CLAMP: f64 = 1e-300;

/// Pre-softmax scores per prefix of one trajectory.
pub type LogitSequence<T> = Vec<Array1<T>>;

/// The per-timestep soft targets `z_1..z_T` of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSchedule<T: Scalar> {
    targets: Vec<Array1<T>>,
    lambda: T,
}

impl<T: Scalar> TargetSchedule<T> {
    pub fn targets(&self) -> &[Array1<T>] {
        &self.targets
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

fn clamp<T: Scalar>(x: T) -> T {
    x.max(T::from_f64_lossy(LOG_CLAMP).max(T::min_positive_value()))
}

/// `H[p ‖ q] = -Σ p_k log q_k`, total thanks to clamping.
pub fn cross_entropy<T: Scalar>(p: &Array1<T>, q: &Array1<T>) -> T {
    p.iter()
        .zip(q.iter())
        .map(|(&pk, &qk)| {
            if pk == T::zero() {
                T::zero()
            } else {
                -pk * clamp(qk).ln()
            }
        })
        .sum()
}

/// Shannon entropy `H[p] = -Σ p_k log p_k`.
pub fn entropy<T: Scalar>(p: &Array1<T>) -> T {
    cross_entropy(p, p)
}

/// `KL[p ‖ q] = H[p ‖ q] - H[p]`; zero iff `p = q` (within clamping).
pub fn kl_divergence<T: Scalar>(p: &Array1<T>, q: &Array1<T>) -> T {
    cross_entropy(p, q) - entropy(p)
}

/// Softmax with max-subtraction for overflow safety.
pub fn softmax<T: Scalar>(logits: &Array1<T>) -> Array1<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Array1<T> = logits.mapv(|v| (v - max).exp());
    let total: T = exps.iter().copied().sum();
    exps.mapv(|v| v / total)
}

/// One-hot vector `δ_y` (1-based `label`).
pub fn one_hot<T: Scalar>(label: usize, num_classes: usize) -> Array1<T> {
    let mut v = Array1::zeros(num_classes);
    v[label - 1] = T::one();
    v
}

/// Computes the soft-target schedule for one trajectory of length
/// `probs_next.len() + 1`.
///
/// `probs_next[t-1]` is the reference distribution at the prefix ending in
/// `s_{t+1}`, for `t = 1..T-1`; the schedule satisfies `z_T = δ_y` exactly
/// and the backward recursion above.
pub fn compute_targets<T: Scalar>(
    probs_next: &[Array1<T>],
    label: usize,
    num_classes: usize,
    lambda: T,
) -> Result<TargetSchedule<T>> {
    if lambda < T::zero() || lambda > T::one() {
        return Err(Error::InvalidInput(format!("lambda must be in [0, 1], got {lambda}")));
    }
    if label == 0 || label > num_classes {
        return Err(Error::InvalidInput(format!(
            "label {label} outside [1..{num_classes}]"
        )));
    }
    let len = probs_next.len() + 1;
    let mut targets = vec![Array1::zeros(num_classes); len];
    targets[len - 1] = one_hot(label, num_classes);
    let blend = T::one() - lambda;
    for t in (0..len - 1).rev() {
        let next = targets[t + 1].clone();
        targets[t] = next.mapv(|v| lambda * v) + probs_next[t].mapv(|v| blend * v);
    }
    Ok(TargetSchedule { targets, lambda })
}

/// Per-sequence mean loss `(1/T) Σ_t H[z_t ‖ softmax(logits_t)]`.
pub fn sequence_loss<T: Scalar>(logits: &[Array1<T>], schedule: &TargetSchedule<T>) -> Result<T> {
    if logits.len() != schedule.len() {
        return Err(Error::Dimension(format!(
            "logit sequence has length {}, target schedule has length {}",
            logits.len(),
            schedule.len()
        )));
    }
    let total: T = logits
        .iter()
        .zip(schedule.targets())
        .map(|(l, z)| cross_entropy(z, &softmax(l)))
        .sum();
    Ok(total / T::from_usize_lossy(logits.len()))
}

/// Exact gradient of [`sequence_loss`] with the targets held fixed
/// (stop-gradient): `∂loss/∂logits_t = (softmax(logits_t) - z_t) / T`.
pub fn sequence_loss_grad<T: Scalar>(
    logits: &[Array1<T>],
    schedule: &TargetSchedule<T>,
) -> Result<Vec<Array1<T>>> {
    if logits.len() != schedule.len() {
        return Err(Error::Dimension(format!(
            "logit sequence has length {}, target schedule has length {}",
            logits.len(),
            schedule.len()
        )));
    }
    let scale = T::one() / T::from_usize_lossy(logits.len());
    Ok(logits
        .iter()
        .zip(schedule.targets())
        .map(|(l, z)| (softmax(l) - z).mapv(|v| v * scale))
        .collect())
}
