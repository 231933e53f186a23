//! Temporally-consistent incremental sequence classification on absorbing
//! Markov chains.
//!
//! The library models a sequence-classification problem as an absorbing
//! Markov chain with `M` transient states and `K` absorbing states (the
//! classes). It provides:
//!
//! - exact absorption-probability solvers (fixed-point iteration and a dense
//!   linear solve) and trajectory sampling ([`markov`]),
//! - the direct and indirect (temporally-consistent) estimators built from
//!   labelled trajectories ([`estimation`]),
//! - the TC-λ soft-target loss family and its exact gradients ([`loss`]),
//! - gradient training of tabular softmax classifiers ([`trainer`]),
//! - evaluation metrics for incremental classifiers ([`metrics`]),
//! - the synthetic layered-chain studies ([`experiments`]),
//! - file formats for chains, datasets, checkpoints and reports ([`io`]).
//!
//! Core numerics are generic over the scalar type through [`Scalar`];
//! concrete aliases for `f32` and `f64` are exported at the crate root.

pub mod error;
pub mod estimation;
pub mod experiments;
pub mod io;
pub mod loss;
pub mod markov;
pub mod metrics;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use estimation::{EmpiricalChain, EstimateReport, EstimatorKind};
pub use experiments::{ExperimentReport, LayeredChainSpec};
pub use loss::TargetSchedule;
pub use markov::{Dataset, MarkovChain, ProbMatrix, Trajectory};
pub use metrics::EvalRecord;
pub use trainer::{TabularClassifier, TrainConfig, TrainReport};

/// `f64` concrete aliases (the default precision throughout the CLI).
pub type MarkovChainF64 = markov::MarkovChain<f64>;
pub type ProbMatrixF64 = markov::ProbMatrix<f64>;
pub type EmpiricalChainF64 = estimation::EmpiricalChain<f64>;
pub type TabularClassifierF64 = trainer::TabularClassifier<f64>;
pub type TargetScheduleF64 = loss::TargetSchedule<f64>;

/// `f32` concrete aliases.
pub type MarkovChainF32 = markov::MarkovChain<f32>;
pub type ProbMatrixF32 = markov::ProbMatrix<f32>;
pub type EmpiricalChainF32 = estimation::EmpiricalChain<f32>;
pub type TabularClassifierF32 = trainer::TabularClassifier<f32>;
pub type TargetScheduleF32 = loss::TargetSchedule<f32>;
