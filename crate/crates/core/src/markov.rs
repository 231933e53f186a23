//! Absorbing Markov chains: validation, exact absorption probabilities, and
//! trajectory sampling.
//!
//! A chain over `M` transient states and `K` absorbing states (classes) is
//! characterized by the pair `(Q, R)`: `Q` holds transient-to-transient
//! transition probabilities, `R` transient-to-absorbing ones. State and class
//! indices are 1-based in all public interfaces.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Absolute tolerance on input row sums and the initial distribution.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Row-stochasticity tolerance on probability matrices.
pub const PROB_ROW_TOL: f64 = 1e-9;
/// Default fixed-point convergence tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default fixed-point iteration cap. Non-convergence within this budget
/// indicates an invalid chain rather than slow mixing.
pub const DEFAULT_MAX_ITERS: usize = 100_000;
/// Safeguard cap on sampled trajectory length.
pub const MAX_TRAJECTORY_STEPS: usize = 1_000_000;

/// An absorbing Markov chain `(Q, R)` with an initial distribution over
/// transient states.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain<T: Scalar> {
    q: Array2<T>,
    r: Array2<T>,
    initial: Array1<T>,
}

/// A single invariant violation found by [`MarkovChain::validate`].
///
/// Rows, columns and states are reported 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EntryOutOfRange {
        matrix: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },
    RowSumMismatch {
        row: usize,
        sum: f64,
    },
    InitialSumMismatch {
        sum: f64,
    },
    /// No absorbing state is reachable from this transient state.
    Unreachable {
        state: usize,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::EntryOutOfRange { matrix, row, col, value } => write!(
                f,
                "{matrix}[{row},{col}] = {value} is outside [0, 1]"
            ),
            Violation::RowSumMismatch { row, sum } => write!(
                f,
                "row {row} of (Q|R) sums to {sum}, expected 1 within {ROW_SUM_TOL:e}"
            ),
            Violation::InitialSumMismatch { sum } => write!(
                f,
                "initial distribution sums to {sum}, expected 1 within {ROW_SUM_TOL:e}"
            ),
            Violation::Unreachable { state } => write!(
                f,
                "no absorbing state is reachable from transient state {state}"
            ),
        }
    }
}

/// Outcome of [`MarkovChain::validate`]: either ok or a list of violations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "- {v}")?;
        }
        Ok(())
    }
}

/// Result of a converged fixed-point solve.
#[derive(Debug, Clone)]
pub struct FixedPointSolution<T: Scalar> {
    pub probs: ProbMatrix<T>,
    pub iterations: usize,
}

impl<T: Scalar> MarkovChain<T> {
    /// Builds a chain, checking structural dimensions only. Invariants are
    /// checked separately by [`validate`](Self::validate).
    pub fn new(q: Array2<T>, r: Array2<T>, initial: Array1<T>) -> Result<Self> {
        let m = q.nrows();
        if m == 0 {
            return Err(Error::Dimension("chain must have at least one transient state".into()));
        }
        if q.ncols() != m {
            return Err(Error::Dimension(format!(
                "Q must be square, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if r.nrows() != m {
            return Err(Error::Dimension(format!(
                "R has {} rows, expected {m}",
                r.nrows()
            )));
        }
        if r.ncols() == 0 {
            return Err(Error::Dimension("chain must have at least one absorbing state".into()));
        }
        if initial.len() != m {
            return Err(Error::Dimension(format!(
                "initial distribution has length {}, expected {m}",
                initial.len()
            )));
        }
        Ok(Self { q, r, initial })
    }

    /// Number of transient states.
    pub fn num_states(&self) -> usize {
        self.q.nrows()
    }

    /// Number of absorbing states (classes).
    pub fn num_classes(&self) -> usize {
        self.r.ncols()
    }

    pub fn q(&self) -> &Array2<T> {
        &self.q
    }

    pub fn r(&self) -> &Array2<T> {
        &self.r
    }

    pub fn initial(&self) -> &Array1<T> {
        &self.initial
    }

    /// Checks every chain invariant and reports all violations found.
    pub fn validate(&self) -> ValidationReport {
        let m = self.num_states();
        let k = self.num_classes();
        let mut violations = Vec::new();
        let one = T::one();
        let zero = T::zero();
        // Widened to a few ulps per summand for scalars coarser than f64.
        let row_tol = T::from_f64_lossy(ROW_SUM_TOL)
            .max(T::epsilon() * T::from_usize_lossy(8 * (m + k)));

        for i in 0..m {
            let mut sum = zero;
            for j in 0..m {
                let v = self.q[(i, j)];
                if v < zero || v > one {
                    violations.push(Violation::EntryOutOfRange {
                        matrix: "Q",
                        row: i + 1,
                        col: j + 1,
                        value: v.to_f64_lossy(),
                    });
                }
                sum += v;
            }
            for j in 0..k {
                let v = self.r[(i, j)];
                if v < zero || v > one {
                    violations.push(Violation::EntryOutOfRange {
                        matrix: "R",
                        row: i + 1,
                        col: j + 1,
                        value: v.to_f64_lossy(),
                    });
                }
                sum += v;
            }
            if (sum - one).abs() > row_tol {
                violations.push(Violation::RowSumMismatch {
                    row: i + 1,
                    sum: sum.to_f64_lossy(),
                });
            }
        }

        let mut init_sum = zero;
        for i in 0..m {
            let v = self.initial[i];
            if v < zero || v > one {
                violations.push(Violation::EntryOutOfRange {
                    matrix: "initial",
                    row: 1,
                    col: i + 1,
                    value: v.to_f64_lossy(),
                });
            }
            init_sum += v;
        }
        if (init_sum - one).abs() > row_tol {
            violations.push(Violation::InitialSumMismatch {
                sum: init_sum.to_f64_lossy(),
            });
        }

        for state in self.unreachable_states() {
            violations.push(Violation::Unreachable { state: state + 1 });
        }

        ValidationReport { violations }
    }

    /// Returns `Err(Error::InvalidChain)` unless all invariants hold.
    pub fn require_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidChain(report))
        }
    }

    /// States (0-based) from which no absorbing state is reachable, found by
    /// breadth-first search on the nonzero pattern of `Q` backwards from all
    /// states with a nonzero `R` row.
    fn unreachable_states(&self) -> Vec<usize> {
        let m = self.num_states();
        let k = self.num_classes();
        let zero = T::zero();
        let mut reaches = vec![false; m];
        let mut queue = std::collections::VecDeque::new();
        for i in 0..m {
            if (0..k).any(|j| self.r[(i, j)] > zero) {
                reaches[i] = true;
                queue.push_back(i);
            }
        }
        while let Some(j) = queue.pop_front() {
            for i in 0..m {
                if !reaches[i] && self.q[(i, j)] > zero {
                    reaches[i] = true;
                    queue.push_back(i);
                }
            }
        }
        (0..m).filter(|&i| !reaches[i]).collect()
    }

    /// Solves for the absorption probabilities by the fixed-point iteration
    /// `P <- Q P + R`, starting from `p0` (uniform rows by default).
    ///
    /// Converges for any row-stochastic start; the limit is independent of
    /// `p0`. Stops when the max-abs change between successive iterates drops
    /// to `tol`.
    pub fn solve_absorption_fixed_point(
        &self,
        p0: Option<&ProbMatrix<T>>,
        tol: T,
        max_iters: usize,
    ) -> Result<FixedPointSolution<T>> {
        self.require_valid()?;
        if tol <= T::zero() {
            return Err(Error::InvalidInput("tol must be positive".into()));
        }
        let m = self.num_states();
        let k = self.num_classes();
        let mut p = match p0 {
            Some(p0) => {
                if p0.rows() != m || p0.cols() != k {
                    return Err(Error::Dimension(format!(
                        "P0 is {}x{}, expected {m}x{k}",
                        p0.rows(),
                        p0.cols()
                    )));
                }
                p0.values().clone()
            }
            None => ProbMatrix::uniform(m, k).values().clone(),
        };
        let mut residual = T::infinity();
        for iter in 1..=max_iters {
            let next = self.q.dot(&p) + &self.r;
            residual = max_abs_diff(&next, &p);
            p = next;
            if residual <= tol {
                return Ok(FixedPointSolution {
                    probs: ProbMatrix::new(p)?,
                    iterations: iter,
                });
            }
        }
        Err(Error::NonConvergence {
            iterations: max_iters,
            residual: residual.to_f64_lossy(),
            last_iterate: to_f64_rows(&p),
        })
    }

    /// Solves for the absorption probabilities by the dense linear solve
    /// `(I - Q) P = R`. Used as the independent cross-check of the
    /// fixed-point route.
    pub fn solve_absorption_closed_form(&self) -> Result<ProbMatrix<T>> {
        self.require_valid()?;
        let m = self.num_states();
        let mut a = Array2::<T>::zeros((m, m));
        for i in 0..m {
            for j in 0..m {
                a[(i, j)] = if i == j { T::one() - self.q[(i, j)] } else { -self.q[(i, j)] };
            }
        }
        let p = solve_linear_system(a, self.r.clone())?;
        ProbMatrix::new(p)
    }

    /// Samples `n` labelled trajectories. The first state is drawn from the
    /// initial distribution, subsequent transitions from the rows of `(Q|R)`;
    /// a trajectory ends at its first absorbing transition. Deterministic for
    /// a fixed seed.
    pub fn sample_trajectories(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.require_valid()?;
        if n == 0 {
            return Err(Error::InvalidInput("sample size must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trajectories = Vec::with_capacity(n);
        for _ in 0..n {
            trajectories.push(self.sample_one(&mut rng)?);
        }
        Dataset::new(trajectories, self.num_states(), self.num_classes())
    }

    fn sample_one(&self, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
        let m = self.num_states();
        let mut state = draw_index(self.initial.iter().copied(), rng)
            .ok_or_else(|| Error::InvalidInput("initial distribution has no mass".into()))?;
        let mut states = vec![state + 1];
        for _ in 0..MAX_TRAJECTORY_STEPS {
            // Inverse-CDF over the renormalized concatenated row Q[m,.] | R[m,.].
            let q_row = self.q.row(state);
            let r_row = self.r.row(state);
            let row = q_row.iter().copied().chain(r_row.iter().copied());
            let idx = draw_index(row, rng).expect("validated row has positive mass");
            if idx < m {
                state = idx;
                states.push(state + 1);
            } else {
                return Ok(Trajectory {
                    states,
                    label: idx - m + 1,
                });
            }
        }
        Err(Error::StepCap {
            cap: MAX_TRAJECTORY_STEPS,
            state: state + 1,
        })
    }
}

/// Draws an index from an unnormalized nonnegative weight sequence by
/// inverse CDF with strict cumulative comparison. Returns the last positive
/// entry if floating-point shortfall leaves the draw past the end.
fn draw_index<T: Scalar>(weights: impl Iterator<Item = T> + Clone, rng: &mut ChaCha8Rng) -> Option<usize> {
    let total: T = weights.clone().sum();
    if total <= T::zero() {
        return None;
    }
    let u = T::from_f64_lossy(rng.gen::<f64>()) * total;
    let mut cum = T::zero();
    let mut last_positive = None;
    for (i, w) in weights.enumerate() {
        if w > T::zero() {
            last_positive = Some(i);
            cum += w;
            if cum > u {
                return Some(i);
            }
        }
    }
    last_positive
}

/// Solves `A X = B` in place by Gaussian elimination with partial pivoting.
fn solve_linear_system<T: Scalar>(mut a: Array2<T>, mut b: Array2<T>) -> Result<Array2<T>> {
    let n = a.nrows();
    let k = b.ncols();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[(row, col)].abs() > a[(pivot, col)].abs() {
                pivot = row;
            }
        }
        if a[(pivot, col)] == T::zero() {
            return Err(Error::Singular(format!("zero pivot in column {}", col + 1)));
        }
        if pivot != col {
            for j in 0..n {
                a.swap((col, j), (pivot, j));
            }
            for j in 0..k {
                b.swap((col, j), (pivot, j));
            }
        }
        let diag = a[(col, col)];
        for row in col + 1..n {
            let factor = a[(row, col)] / diag;
            if factor == T::zero() {
                continue;
            }
            for j in col..n {
                let v = a[(col, j)];
                a[(row, j)] = a[(row, j)] - factor * v;
            }
            for j in 0..k {
                let v = b[(col, j)];
                b[(row, j)] = b[(row, j)] - factor * v;
            }
        }
    }
    let mut x = Array2::<T>::zeros((n, k));
    for col in (0..n).rev() {
        for j in 0..k {
            let mut acc = b[(col, j)];
            for jj in col + 1..n {
                acc = acc - a[(col, jj)] * x[(jj, j)];
            }
            x[(col, j)] = acc / a[(col, col)];
        }
    }
    Ok(x)
}

fn max_abs_diff<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (*x - *y).abs())
        .fold(T::zero(), T::max)
}

fn to_f64_rows<T: Scalar>(a: &Array2<T>) -> Vec<Vec<f64>> {
    a.rows()
        .into_iter()
        .map(|row| row.iter().map(|v| v.to_f64_lossy()).collect())
        .collect()
}

/// A row-stochastic `M x K` matrix of class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix<T: Scalar> {
    values: Array2<T>,
}

impl<T: Scalar> ProbMatrix<T> {
    /// Wraps a matrix, checking nonnegativity and row sums (within
    /// [`PROB_ROW_TOL`], widened to a few ulps for scalars coarser than
    /// `f64`).
    pub fn new(values: Array2<T>) -> Result<Self> {
        let k = values.ncols().max(1);
        let tol = T::from_f64_lossy(PROB_ROW_TOL)
            .max(T::epsilon() * T::from_usize_lossy(8 * k));
        for (i, row) in values.rows().into_iter().enumerate() {
            let mut sum = T::zero();
            for &v in row.iter() {
                if v < T::zero() {
                    return Err(Error::InvalidInput(format!(
                        "probability matrix entry ({},{}) is negative",
                        i + 1,
                        row.iter().position(|x| *x == v).unwrap_or(0) + 1
                    )));
                }
                sum += v;
            }
            if (sum - T::one()).abs() > tol {
                return Err(Error::InvalidInput(format!(
                    "probability matrix row {} sums to {}, expected 1 within {tol}",
                    i + 1,
                    sum
                )));
            }
        }
        Ok(Self { values })
    }

    /// The maximum-entropy matrix with every row uniform (`1/K` each).
    pub fn uniform(rows: usize, cols: usize) -> Self {
        let v = T::one() / T::from_usize_lossy(cols);
        Self {
            values: Array2::from_elem((rows, cols), v),
        }
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn row(&self, state: usize) -> ndarray::ArrayView1<'_, T> {
        self.values.row(state)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        max_abs_diff(&self.values, &other.values)
    }
}

/// A transient-state sequence ending in an absorbing label. Indices are
/// 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub label: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// A labelled collection of trajectories over `M` states and `K` classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    trajectories: Vec<Trajectory>,
    m: usize,
    k: usize,
}

impl Dataset {
    /// Builds a dataset, validating index ranges only (externally loaded data
    /// is not checked against any chain's support).
    pub fn new(trajectories: Vec<Trajectory>, m: usize, k: usize) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::InvalidInput("dataset must be nonempty".into()));
        }
        for (n, traj) in trajectories.iter().enumerate() {
            if traj.states.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "trajectory {} has no states",
                    n + 1
                )));
            }
            if let Some(&s) = traj.states.iter().find(|&&s| s == 0 || s > m) {
                return Err(Error::InvalidInput(format!(
                    "trajectory {} contains state {s} outside [1..{m}]",
                    n + 1
                )));
            }
            if traj.label == 0 || traj.label > k {
                return Err(Error::InvalidInput(format!(
                    "trajectory {} has label {} outside [1..{k}]",
                    n + 1,
                    traj.label
                )));
            }
        }
        Ok(Self { trajectories, m, k })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.m
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }
}
