//! Gradient training of tabular softmax classifiers with the TC-λ loss
//! family, plus the closed-form iterative argmin on the empirical chain.
//!
//! Both training routes are exposed so their equivalence with the direct and
//! indirect estimators is testable: gradient descent with `λ = 1` recovers
//! the direct estimate, and with `λ = 0` (reference refreshed per outer
//! iteration) the indirect one.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimation::build_empirical_chain;
use crate::loss::{compute_targets, sequence_loss, softmax, LogitSequence};
use crate::markov::{Dataset, ProbMatrix, Trajectory};
use crate::metrics::{mean_successive_kl, EvalRecord};
use crate::scalar::Scalar;

/// When the stop-gradient reference model is refreshed during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetRefresh {
    /// Targets are recomputed from the live parameters at every step.
    PerStep,
    /// The reference is frozen for a block of passes, realizing the outer
    /// iteration of the iterative TC optimization.
    PerOuterIteration,
}

/// How each sequence's loss terms are combined.
///
/// `PerPrefixMean` divides by the sequence length so every sequence
/// contributes equally; `PrefixSum` keeps the plain sum over prefixes, under
/// which the tabular optima coincide exactly with the direct/indirect
/// estimators regardless of length variation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossScale {
    PerPrefixMean,
    PrefixSum,
}

#[derive(Debug, Clone)]
pub struct TrainConfig<T: Scalar> {
    pub lambda: T,
    pub learning_rate: T,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Number of reference refreshes in `PerOuterIteration` mode; the
    /// reference is frozen for `epochs / outer_iterations` consecutive
    /// passes. Ignored in `PerStep` mode.
    pub outer_iterations: usize,
    pub target_refresh: TargetRefresh,
    pub loss_scale: LossScale,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            lambda: T::one(),
            learning_rate: T::from_f64_lossy(0.5),
            epochs: 100,
            batch_size: 32,
            seed: 0,
            outer_iterations: 10,
            target_refresh: TargetRefresh::PerStep,
            loss_scale: LossScale::PerPrefixMean,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < T::zero() || self.lambda > T::one() {
            return Err(Error::InvalidInput(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.learning_rate > T::zero()) {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.outer_iterations == 0 {
            return Err(Error::InvalidInput(
                "epochs, batch_size and outer_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-state logits; the predicted distribution for state `m` is
/// `softmax(theta[m, .])`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularClassifier<T: Scalar> {
    theta: Array2<T>,
}

impl<T: Scalar> TabularClassifier<T> {
    /// All-zero logits: uniform predictions everywhere.
    pub fn zeros(num_states: usize, num_classes: usize) -> Self {
        Self {
            theta: Array2::zeros((num_states, num_classes)),
        }
    }

    pub fn from_theta(theta: Array2<T>) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("theta contains non-finite entries".into()));
        }
        Ok(Self { theta })
    }

    pub fn num_states(&self) -> usize {
        self.theta.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.theta.ncols()
    }

    pub fn theta(&self) -> &Array2<T> {
        &self.theta
    }

    /// Predicted class distribution at a (1-based) state.
    pub fn predict(&self, state: usize) -> Result<Array1<T>> {
        if state == 0 || state > self.num_states() {
            return Err(Error::InvalidInput(format!(
                "state {state} outside [1..{}]",
                self.num_states()
            )));
        }
        Ok(softmax(&self.theta.row(state - 1).to_owned()))
    }

    /// The full probability table `softmax(theta)` row by row.
    pub fn prob_table(&self) -> ProbMatrix<T> {
        let mut values = Array2::zeros(self.theta.raw_dim());
        for (i, row) in self.theta.rows().into_iter().enumerate() {
            let p = softmax(&row.to_owned());
            values.row_mut(i).assign(&p);
        }
        ProbMatrix::new(values).expect("softmax rows are stochastic")
    }

    /// Logits along a trajectory: entry `t` is the row for state `s_t`.
    pub fn logits_for(&self, traj: &Trajectory) -> LogitSequence<T> {
        traj.states
            .iter()
            .map(|&s| self.theta.row(s - 1).to_owned())
            .collect()
    }
}

/// One training step against an explicit frozen reference. Returns the mean
/// per-sequence loss over the batch, evaluated before the update.
pub fn train_step_with_reference<T: Scalar>(
    model: &mut TabularClassifier<T>,
    batch: &[Trajectory],
    cfg: &TrainConfig<T>,
    reference: &TabularClassifier<T>,
) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("batch must be nonempty".into()));
    }
    cfg.validate()?;
    let k = model.num_classes();
    let mut grad = Array2::<T>::zeros(model.theta.raw_dim());
    let mut loss_total = T::zero();
    for traj in batch {
        let probs_next: Vec<Array1<T>> = traj.states[1..]
            .iter()
            .map(|&s| reference.predict(s))
            .collect::<Result<_>>()?;
        let schedule = compute_targets(&probs_next, traj.label, k, cfg.lambda)?;
        let logits = model.logits_for(traj);
        loss_total += sequence_loss(&logits, &schedule)?;
        let scale = match cfg.loss_scale {
            LossScale::PerPrefixMean => T::one() / T::from_usize_lossy(traj.len()),
            LossScale::PrefixSum => T::one(),
        };
        for (t, &s) in traj.states.iter().enumerate() {
            let p = softmax(&logits[t]);
            let z = &schedule.targets()[t];
            for c in 0..k {
                grad[(s - 1, c)] += (p[c] - z[c]) * scale;
            }
        }
    }
    let step = cfg.learning_rate / T::from_usize_lossy(batch.len());
    model.theta = &model.theta - &grad.mapv(|g| g * step);
    Ok(loss_total / T::from_usize_lossy(batch.len()))
}

/// One training step with per-step stop-gradient: targets come from the
/// parameters as they stand at the start of the step.
pub fn train_step<T: Scalar>(
    model: &mut TabularClassifier<T>,
    batch: &[Trajectory],
    cfg: &TrainConfig<T>,
) -> Result<T> {
    let reference = model.clone();
    train_step_with_reference(model, batch, cfg, &reference)
}

/// Training record: per-epoch mean loss, the final classifier, and an
/// optional per-epoch mean successive-KL trace on held-out data.
#[derive(Debug, Clone)]
pub struct TrainReport<T: Scalar> {
    pub trace: Vec<T>,
    pub model: TabularClassifier<T>,
    pub holdout_kl: Option<Vec<T>>,
}

/// Trains a tabular classifier over shuffled minibatches. Deterministic for
/// a fixed config and dataset.
pub fn fit_gradient<T: Scalar>(
    data: &Dataset,
    cfg: &TrainConfig<T>,
    holdout: Option<&Dataset>,
) -> Result<TrainReport<T>> {
    cfg.validate()?;
    let m = data.num_states();
    let k = data.num_classes();
    let mut model = TabularClassifier::zeros(m, k);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let block = (cfg.epochs / cfg.outer_iterations).max(1);
    let mut reference = model.clone();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut kl_trace = holdout.map(|_| Vec::with_capacity(cfg.epochs));

    for epoch in 0..cfg.epochs {
        if cfg.target_refresh == TargetRefresh::PerOuterIteration && epoch % block == 0 {
            reference = model.clone();
        }
        indices.shuffle(&mut rng);
        let mut loss_sum = T::zero();
        for chunk in indices.chunks(cfg.batch_size) {
            let batch: Vec<Trajectory> = chunk
                .iter()
                .map(|&i| data.trajectories()[i].clone())
                .collect();
            let batch_loss = match cfg.target_refresh {
                TargetRefresh::PerStep => train_step(&mut model, &batch, cfg)?,
                TargetRefresh::PerOuterIteration => {
                    train_step_with_reference(&mut model, &batch, cfg, &reference)?
                }
            };
            loss_sum += batch_loss * T::from_usize_lossy(batch.len());
        }
        let mean_loss = loss_sum / T::from_usize_lossy(data.len());
        if !mean_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                learning_rate: cfg.learning_rate.to_f64_lossy(),
            });
        }
        trace.push(mean_loss);
        if let (Some(kls), Some(held)) = (kl_trace.as_mut(), holdout) {
            kls.push(holdout_successive_kl(&model, held)?);
        }
    }

    Ok(TrainReport {
        trace,
        model,
        holdout_kl: kl_trace,
    })
}

fn holdout_successive_kl<T: Scalar>(
    model: &TabularClassifier<T>,
    holdout: &Dataset,
) -> Result<T> {
    let records = evaluate_on(model, holdout)?;
    mean_successive_kl(&records)
}

/// Runs a classifier along every trajectory of a dataset, producing one
/// evaluation record per trajectory.
pub fn evaluate_on<T: Scalar>(
    model: &TabularClassifier<T>,
    data: &Dataset,
) -> Result<Vec<EvalRecord<T>>> {
    data.trajectories()
        .iter()
        .map(|traj| {
            let preds = traj
                .states
                .iter()
                .map(|&s| model.predict(s))
                .collect::<Result<Vec<_>>>()?;
            EvalRecord::new(preds, traj.label)
        })
        .collect()
}

/// Closed-form iterative argmin of the tabular TC objective: iterates the
/// probability table `P <- Qhat P + Rhat` from uniform rows until the
/// max-abs change drops to `tol`.
///
/// Kept as an independent code path from the indirect estimator so their
/// agreement is a meaningful cross-check.
pub fn fit_tabular_tc<T: Scalar>(
    data: &Dataset,
    tol: T,
    max_iters: usize,
) -> Result<ProbMatrix<T>> {
    if tol <= T::zero() {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let emp = build_empirical_chain::<T>(data);
    let k = data.num_classes();
    let mut p = ProbMatrix::<T>::uniform(data.num_states(), k)
        .values()
        .clone();
    let mut residual = T::infinity();
    for _ in 0..max_iters {
        let next = emp.qhat.dot(&p) + &emp.rhat;
        residual = next
            .iter()
            .zip(p.iter())
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max);
        p = next;
        if residual <= tol {
            return ProbMatrix::new(p);
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iters,
        residual: residual.to_f64_lossy(),
        last_iterate: p
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.to_f64_lossy()).collect())
            .collect(),
    })
}
