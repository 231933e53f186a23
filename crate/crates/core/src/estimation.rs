//! Direct and indirect (temporally-consistent) estimators of absorption
//! probabilities from labelled trajectories.
//!
//! The direct estimator averages eventual labels over every visit to a
//! state. The indirect estimator first builds the empirical chain
//! `(Qhat, Rhat)` from one-hop transition counts, then solves it exactly.
//! Repeat visits within a trajectory count once per occurrence: the
//! transition multisets carry the `c_m` weighting the estimators rely on.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::markov::{Dataset, MarkovChain, ProbMatrix, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::scalar::Scalar;

/// Which estimator produced an [`EstimateReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Direct,
    Indirect,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorKind::Direct => write!(f, "direct"),
            EstimatorKind::Indirect => write!(f, "indirect"),
        }
    }
}

/// The empirical chain `(Qhat, Rhat)` built from one-hop transition counts.
///
/// `visit_counts[m]` is `c_m`, the number of outgoing transitions observed
/// from state `m` (equivalently, the number of visits to `m`). Rows with
/// `c_m = 0` fall back to immediate uniform absorption (`Qhat` row zero,
/// `Rhat` row `1/K`), which keeps the chain valid and yields the uniform
/// fallback row in the solved estimate.
#[derive(Debug, Clone)]
pub struct EmpiricalChain<T: Scalar> {
    pub qhat: Array2<T>,
    pub rhat: Array2<T>,
    pub visit_counts: Vec<usize>,
    pub unvisited: Vec<usize>,
}

impl<T: Scalar> EmpiricalChain<T> {
    /// Views the empirical chain as a [`MarkovChain`] (uniform initial
    /// distribution; the initial distribution plays no role in absorption).
    pub fn to_chain(&self) -> Result<MarkovChain<T>> {
        let m = self.qhat.nrows();
        let initial = Array1::from_elem(m, T::one() / T::from_usize_lossy(m));
        MarkovChain::new(self.qhat.clone(), self.rhat.clone(), initial)
    }
}

/// An estimate plus per-state support and fallback flags.
#[derive(Debug, Clone)]
pub struct EstimateReport<T: Scalar> {
    pub estimate: ProbMatrix<T>,
    /// Number of observed samples backing each row.
    pub per_state_support: Vec<usize>,
    pub method: EstimatorKind,
}

impl<T: Scalar> EstimateReport<T> {
    /// Rows with zero support carry the uniform fallback value.
    pub fn is_fallback(&self, state: usize) -> bool {
        self.per_state_support[state] == 0
    }
}

/// Direct estimator: row `m` is the empirical distribution of eventual
/// labels over all (state, label) pairs in the dataset. A state visited
/// twice in one trajectory contributes twice.
pub fn estimate_direct<T: Scalar>(data: &Dataset) -> EstimateReport<T> {
    let m = data.num_states();
    let k = data.num_classes();
    let mut counts = vec![vec![0usize; k]; m];
    let mut support = vec![0usize; m];
    for traj in data.trajectories() {
        for &s in &traj.states {
            counts[s - 1][traj.label - 1] += 1;
            support[s - 1] += 1;
        }
    }
    let mut values = Array2::<T>::zeros((m, k));
    for s in 0..m {
        if support[s] == 0 {
            let u = T::one() / T::from_usize_lossy(k);
            for c in 0..k {
                values[(s, c)] = u;
            }
        } else {
            let total = T::from_usize_lossy(support[s]);
            for c in 0..k {
                values[(s, c)] = T::from_usize_lossy(counts[s][c]) / total;
            }
        }
    }
    EstimateReport {
        estimate: ProbMatrix::new(values).expect("normalized counts are row-stochastic"),
        per_state_support: support,
        method: EstimatorKind::Direct,
    }
}

/// Builds the empirical chain from one-hop transition counts:
/// `Qhat[m,m'] = #(m -> m') / c_m` and `Rhat[m,k] = #(m -> class k) / c_m`.
pub fn build_empirical_chain<T: Scalar>(data: &Dataset) -> EmpiricalChain<T> {
    let m = data.num_states();
    let k = data.num_classes();
    let mut q_counts = vec![vec![0usize; m]; m];
    let mut r_counts = vec![vec![0usize; k]; m];
    let mut visit_counts = vec![0usize; m];
    for traj in data.trajectories() {
        for pair in traj.states.windows(2) {
            q_counts[pair[0] - 1][pair[1] - 1] += 1;
            visit_counts[pair[0] - 1] += 1;
        }
        let last = traj.states[traj.states.len() - 1];
        r_counts[last - 1][traj.label - 1] += 1;
        visit_counts[last - 1] += 1;
    }
    let mut qhat = Array2::<T>::zeros((m, m));
    let mut rhat = Array2::<T>::zeros((m, k));
    let mut unvisited = Vec::new();
    for s in 0..m {
        if visit_counts[s] == 0 {
            unvisited.push(s + 1);
            let u = T::one() / T::from_usize_lossy(k);
            for c in 0..k {
                rhat[(s, c)] = u;
            }
        } else {
            let total = T::from_usize_lossy(visit_counts[s]);
            for s2 in 0..m {
                qhat[(s, s2)] = T::from_usize_lossy(q_counts[s][s2]) / total;
            }
            for c in 0..k {
                rhat[(s, c)] = T::from_usize_lossy(r_counts[s][c]) / total;
            }
        }
    }
    EmpiricalChain {
        qhat,
        rhat,
        visit_counts,
        unvisited,
    }
}

/// Indirect estimator: the exact absorption probabilities of the empirical
/// chain, found by the fixed-point iteration `P <- Qhat P + Rhat`.
pub fn estimate_indirect<T: Scalar>(
    data: &Dataset,
    tol: T,
    max_iters: usize,
) -> Result<EstimateReport<T>> {
    let empirical = build_empirical_chain::<T>(data);
    let chain = empirical.to_chain()?;
    let report = chain.validate();
    if !report.is_ok() {
        // Impossible when every trajectory terminates, but guard anyway.
        return Err(Error::InvalidChain(report));
    }
    let sol = chain.solve_absorption_fixed_point(None, tol, max_iters)?;
    Ok(EstimateReport {
        estimate: sol.probs,
        per_state_support: empirical.visit_counts,
        method: EstimatorKind::Indirect,
    })
}

/// [`estimate_indirect`] with the crate-default tolerance and iteration cap.
pub fn estimate_indirect_default<T: Scalar>(data: &Dataset) -> Result<EstimateReport<T>> {
    estimate_indirect(data, T::from_f64_lossy(DEFAULT_TOL), DEFAULT_MAX_ITERS)
}
