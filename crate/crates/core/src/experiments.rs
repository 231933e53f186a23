//! The synthetic layered-chain studies: the data-efficiency (MSE ratio)
//! curve, estimator-consistency sweeps, and λ sweeps.
//!
//! Runs are independent and executed in parallel with per-run derived seeds
//! (`seed + run offset`), so every study is deterministic regardless of
//! scheduling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{estimate_direct, estimate_indirect};
use crate::io::fmt_sig;
use crate::markov::{Dataset, MarkovChain, ProbMatrix, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::metrics::{accuracy, mean_nll, mean_successive_kl, roc_auc_ovr_macro};
use crate::scalar::Scalar;
use crate::trainer::{evaluate_on, fit_gradient, TrainConfig};

use ndarray::{Array1, Array2};

/// A chain with `T` layers of `W` states each and two absorbing classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayeredChainSpec {
    /// States per layer.
    pub w: usize,
    /// Number of layers.
    pub t: usize,
}

impl LayeredChainSpec {
    pub fn new(w: usize, t: usize) -> Result<Self> {
        if w == 0 || t == 0 {
            return Err(Error::InvalidInput("W and T must be at least 1".into()));
        }
        Ok(Self { w, t })
    }
}

/// Builds the layered chain: each layer-`t` state routes uniformly (`1/W`)
/// to the next layer; the last layer splits `(1/2, 1/2)` between the two
/// absorbing classes; the initial distribution is uniform over layer 1.
///
/// The exact absorption probabilities are `1/2` everywhere, which makes the
/// chain a clean benchmark for estimator error.
pub fn build_layered_chain<T: Scalar>(spec: LayeredChainSpec) -> MarkovChain<T> {
    let (w, t) = (spec.w, spec.t);
    let m = w * t;
    let mut q = Array2::<T>::zeros((m, m));
    let mut r = Array2::<T>::zeros((m, 2));
    let inv_w = T::one() / T::from_usize_lossy(w);
    let half = T::from_f64_lossy(0.5);
    for layer in 0..t {
        for pos in 0..w {
            let idx = layer * w + pos;
            if layer + 1 < t {
                for next_pos in 0..w {
                    q[(idx, (layer + 1) * w + next_pos)] = inv_w;
                }
            } else {
                r[(idx, 0)] = half;
                r[(idx, 1)] = half;
            }
        }
    }
    let mut initial = Array1::<T>::zeros(m);
    for pos in 0..w {
        initial[pos] = inv_w;
    }
    MarkovChain::new(q, r, initial).expect("layered chain dimensions are consistent")
}

/// One aggregated result row: condition values, a point estimate with a 95%
/// confidence interval, and the number of runs behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub conditions: Vec<String>,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub runs: usize,
}

/// Grid of per-condition study results.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub condition_columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    /// CSV rendering: `condition columns..., mean, ci_lo, ci_hi, runs` with
    /// a header row and at least 12 significant digits on every number.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.condition_columns.join(","));
        out.push_str(",mean,ci_lo,ci_hi,runs\n");
        for row in &self.rows {
            out.push_str(&row.conditions.join(","));
            out.push_str(&format!(
                ",{},{},{},{}\n",
                fmt_sig(row.mean),
                fmt_sig(row.ci_lo),
                fmt_sig(row.ci_hi),
                row.runs
            ));
        }
        out
    }
}

/// Normal-approximation 95% confidence interval on the mean of run-level
/// statistics.
fn mean_ci(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, mean, mean);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    (mean, mean - 1.96 * se, mean + 1.96 * se)
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let idx = ((sorted.len() as f64 - 1.0) * p).round() as usize;
    sorted[idx]
}

/// Squared errors of both estimators at a fixed first-layer state, per run.
struct MseRun {
    direct: f64,
    indirect: f64,
}

/// Replicates the data-efficiency study: for each `W`, samples `N = 20W`
/// trajectories per run and measures the squared error `(p_hat - 1/2)^2` of
/// both estimators at first-layer state 1. Reports the per-estimator MSE and
/// the indirect/direct MSE ratio.
///
/// The ratio's confidence interval comes from block resampling: runs are
/// split into up to 20 equal blocks, a per-block ratio is formed, and a
/// normal-approximation CI is taken over block ratios. The point estimate is
/// the ratio of overall means.
pub fn run_mse_ratio_study<T: Scalar>(
    w_values: &[usize],
    t: usize,
    runs: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    if runs < 2 {
        return Err(Error::InvalidInput("runs must be at least 2".into()));
    }
    if w_values.is_empty() {
        return Err(Error::InvalidInput("W grid must be nonempty".into()));
    }
    let mut rows = Vec::new();
    for (w_idx, &w) in w_values.iter().enumerate() {
        let spec = LayeredChainSpec::new(w, t)?;
        let chain = build_layered_chain::<T>(spec);
        let n = 20 * w;
        let base = seed + (w_idx * runs) as u64;
        let per_run: Vec<MseRun> = (0..runs)
            .into_par_iter()
            .map(|r| -> Result<MseRun> {
                let data = chain.sample_trajectories(n, base + r as u64)?;
                Ok(MseRun {
                    direct: squared_error_at_state_one::<T>(&estimate_direct::<T>(&data).estimate),
                    indirect: squared_error_at_state_one::<T>(
                        &estimate_indirect::<T>(
                            &data,
                            T::from_f64_lossy(DEFAULT_TOL),
                            DEFAULT_MAX_ITERS,
                        )?
                        .estimate,
                    ),
                })
            })
            .collect::<Result<_>>()?;

        let dir: Vec<f64> = per_run.iter().map(|r| r.direct).collect();
        let ind: Vec<f64> = per_run.iter().map(|r| r.indirect).collect();
        let (dir_mean, dir_lo, dir_hi) = mean_ci(&dir);
        let (ind_mean, ind_lo, ind_hi) = mean_ci(&ind);

        let blocks = runs.min(20);
        let block_ratios: Vec<f64> = (0..blocks)
            .filter_map(|b| {
                let lo = b * runs / blocks;
                let hi = (b + 1) * runs / blocks;
                let d: f64 = dir[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
                let i: f64 = ind[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
                (d > 0.0).then(|| i / d)
            })
            .collect();
        let ratio = if dir_mean > 0.0 { ind_mean / dir_mean } else { f64::NAN };
        let (_, ratio_lo, ratio_hi) = mean_ci(&block_ratios);

        rows.push(ReportRow {
            conditions: vec![w.to_string(), "mse_direct".into()],
            mean: dir_mean,
            ci_lo: dir_lo,
            ci_hi: dir_hi,
            runs,
        });
        rows.push(ReportRow {
            conditions: vec![w.to_string(), "mse_indirect".into()],
            mean: ind_mean,
            ci_lo: ind_lo,
            ci_hi: ind_hi,
            runs,
        });
        rows.push(ReportRow {
            conditions: vec![w.to_string(), "ratio".into()],
            mean: ratio,
            ci_lo: ratio_lo,
            ci_hi: ratio_hi,
            runs,
        });
    }
    Ok(ExperimentReport {
        condition_columns: vec!["W".into(), "metric".into()],
        rows,
    })
}

fn squared_error_at_state_one<T: Scalar>(estimate: &ProbMatrix<T>) -> f64 {
    let err = estimate.values()[(0, 0)].to_f64_lossy() - 0.5;
    err * err
}

/// Consistency sweep: for each dataset size `N`, samples `runs` datasets
/// and reports the mean and median (over runs) of each estimator's max-abs
/// error against the exact absorption probabilities.
pub fn run_consistency_study<T: Scalar>(
    chain: &MarkovChain<T>,
    n_values: &[usize],
    runs: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    if runs == 0 || n_values.is_empty() {
        return Err(Error::InvalidInput("runs and N grid must be nonempty".into()));
    }
    let exact = chain.solve_absorption_closed_form()?;
    let mut rows = Vec::new();
    for (n_idx, &n) in n_values.iter().enumerate() {
        let base = seed + (n_idx * runs) as u64;
        let errors: Vec<(f64, f64)> = (0..runs)
            .into_par_iter()
            .map(|r| -> Result<(f64, f64)> {
                let data = chain.sample_trajectories(n, base + r as u64)?;
                let dir = estimate_direct::<T>(&data);
                let ind =
                    estimate_indirect::<T>(&data, T::from_f64_lossy(DEFAULT_TOL), DEFAULT_MAX_ITERS)?;
                Ok((
                    dir.estimate.max_abs_diff(&exact).to_f64_lossy(),
                    ind.estimate.max_abs_diff(&exact).to_f64_lossy(),
                ))
            })
            .collect::<Result<_>>()?;
        let dir: Vec<f64> = errors.iter().map(|e| e.0).collect();
        let ind: Vec<f64> = errors.iter().map(|e| e.1).collect();
        for (estimator, values) in [("direct", &dir), ("indirect", &ind)] {
            let (mean, lo, hi) = mean_ci(values);
            rows.push(ReportRow {
                conditions: vec![n.to_string(), estimator.into(), "mean_max_abs_err".into()],
                mean,
                ci_lo: lo,
                ci_hi: hi,
                runs,
            });
            rows.push(ReportRow {
                conditions: vec![n.to_string(), estimator.into(), "median_max_abs_err".into()],
                mean: median(values),
                ci_lo: percentile(values, 0.025),
                ci_hi: percentile(values, 0.975),
                runs,
            });
        }
    }
    Ok(ExperimentReport {
        condition_columns: vec!["N".into(), "estimator".into(), "stat".into()],
        rows,
    })
}

/// λ sweep: for each λ, trains classifiers on fresh samples and evaluates
/// the max-abs error against the exact solution plus held-out accuracy, NLL,
/// macro ROC AUC and mean successive KL. Reports means with 95% CIs.
pub fn run_lambda_sweep<T: Scalar>(
    chain: &MarkovChain<T>,
    n: usize,
    lambda_values: &[f64],
    cfg: &TrainConfig<T>,
    runs: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    if runs == 0 || lambda_values.is_empty() {
        return Err(Error::InvalidInput("runs and lambda grid must be nonempty".into()));
    }
    let exact = chain.solve_absorption_closed_form()?;
    let holdout_n = n.max(200);
    let mut rows = Vec::new();
    for (l_idx, &lambda) in lambda_values.iter().enumerate() {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidInput(format!(
                "lambda must be in [0, 1], got {lambda}"
            )));
        }
        let base = seed + (l_idx * 2 * runs) as u64;
        let per_run: Vec<[f64; 5]> = (0..runs)
            .into_par_iter()
            .map(|r| -> Result<[f64; 5]> {
                let train = chain.sample_trajectories(n, base + 2 * r as u64)?;
                let held = chain.sample_trajectories(holdout_n, base + 2 * r as u64 + 1)?;
                let mut run_cfg = cfg.clone();
                run_cfg.lambda = T::from_f64_lossy(lambda);
                run_cfg.seed = base + 2 * r as u64;
                let report = fit_gradient(&train, &run_cfg, None)?;
                let records = evaluate_on(&report.model, &held)?;
                let max_abs_err = report.model.prob_table().max_abs_diff(&exact).to_f64_lossy();
                let acc = accuracy(&records, None)?.to_f64_lossy();
                let nll = mean_nll(&records, None)?.to_f64_lossy();
                let auc = match roc_auc_ovr_macro(&records, None) {
                    Ok(r) => r.macro_auc.to_f64_lossy(),
                    Err(Error::UndefinedMetric(_)) => f64::NAN,
                    Err(e) => return Err(e),
                };
                let kl = mean_successive_kl(&records)?.to_f64_lossy();
                Ok([max_abs_err, acc, nll, auc, kl])
            })
            .collect::<Result<_>>()?;

        for (i, metric) in ["max_abs_err", "accuracy", "nll", "roc_auc", "mean_kl"]
            .iter()
            .enumerate()
        {
            let values: Vec<f64> = per_run
                .iter()
                .map(|r| r[i])
                .filter(|v| v.is_finite())
                .collect();
            let (mean, lo, hi) = if values.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                mean_ci(&values)
            };
            rows.push(ReportRow {
                conditions: vec![fmt_sig(lambda), (*metric).into()],
                mean,
                ci_lo: lo,
                ci_hi: hi,
                runs: values.len(),
            });
        }
    }
    Ok(ExperimentReport {
        condition_columns: vec!["lambda".into(), "metric".into()],
        rows,
    })
}

/// Samples a dataset from the layered chain; convenience for the CLI and
/// tests.
pub fn sample_layered<T: Scalar>(spec: LayeredChainSpec, n: usize, seed: u64) -> Result<Dataset> {
    build_layered_chain::<T>(spec).sample_trajectories(n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_layered_chain() {
        let chain = build_layered_chain::<f64>(LayeredChainSpec::new(1, 1).unwrap());
        assert_eq!(chain.num_states(), 1);
        assert_eq!(chain.r()[(0, 0)], 0.5);
        assert_eq!(chain.r()[(0, 1)], 0.5);
        assert!(chain.validate().is_ok());
    }

    #[test]
    fn layered_chain_has_expected_structure() {
        // W=2, T=2: exactly 4 nonzeros of 0.5 in Q (layer 1 -> layer 2).
        let chain = build_layered_chain::<f64>(LayeredChainSpec::new(2, 2).unwrap());
        let nonzeros: Vec<f64> = chain.q().iter().copied().filter(|&v| v != 0.0).collect();
        assert_eq!(nonzeros.len(), 4);
        assert!(nonzeros.iter().all(|&v| v == 0.5));
        assert!(chain.validate().is_ok());
    }

    #[test]
    fn layered_chain_exact_solution_is_half_everywhere() {
        for (w, t) in [(1, 1), (2, 2), (3, 4)] {
            let chain = build_layered_chain::<f64>(LayeredChainSpec::new(w, t).unwrap());
            let p = chain.solve_absorption_closed_form().unwrap();
            for v in p.values().iter() {
                assert!((v - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layered_label_frequency_concentrates() {
        // Binomial concentration: class-1 frequency within 0.02 of 0.5 at
        // N = 10^4.
        let chain = build_layered_chain::<f64>(LayeredChainSpec::new(2, 2).unwrap());
        let data = chain.sample_trajectories(10_000, 11).unwrap();
        let ones = data.trajectories().iter().filter(|t| t.label == 1).count();
        assert!((ones as f64 / 10_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn mse_ratio_study_is_reproducible() {
        let a = run_mse_ratio_study::<f64>(&[1, 2], 2, 40, 3).unwrap();
        let b = run_mse_ratio_study::<f64>(&[1, 2], 2, 40, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn mse_ratio_is_one_at_w1() {
        // W = 1 edge: with a single path per layer the two estimators see
        // the same information.
        let report = run_mse_ratio_study::<f64>(&[1], 2, 200, 7).unwrap();
        let ratio = report
            .rows
            .iter()
            .find(|r| r.conditions[1] == "ratio")
            .unwrap();
        assert!((ratio.mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn doubling_runs_shrinks_ci() {
        // CLT check on run-level squared errors: CI width shrinks like
        // 1/sqrt(2) when runs double.
        let narrow = run_mse_ratio_study::<f64>(&[4], 2, 1600, 5).unwrap();
        let wide = run_mse_ratio_study::<f64>(&[4], 2, 800, 5).unwrap();
        let width = |rep: &ExperimentReport| {
            let row = rep
                .rows
                .iter()
                .find(|r| r.conditions[1] == "mse_direct")
                .unwrap();
            row.ci_hi - row.ci_lo
        };
        let shrink = width(&narrow) / width(&wide);
        assert!((shrink - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.25);
    }

    #[test]
    fn consistency_study_errors_shrink() {
        let chain = build_layered_chain::<f64>(LayeredChainSpec::new(2, 2).unwrap());
        let report = run_consistency_study(&chain, &[100, 10_000], 10, 1).unwrap();
        let median_at = |n: &str, est: &str| {
            report
                .rows
                .iter()
                .find(|r| {
                    r.conditions == vec![n.to_string(), est.to_string(), "median_max_abs_err".to_string()]
                })
                .unwrap()
                .mean
        };
        assert!(median_at("10000", "direct") < median_at("100", "direct"));
        assert!(median_at("10000", "indirect") < median_at("100", "indirect"));
        // N=1-style sanity: errors are bounded by 1 by construction.
        assert!(median_at("100", "direct") <= 1.0);
    }

    #[test]
    fn lambda_sweep_produces_rows_per_lambda() {
        let chain = build_layered_chain::<f64>(LayeredChainSpec::new(2, 2).unwrap());
        let cfg = TrainConfig::<f64> {
            epochs: 40,
            ..TrainConfig::default()
        };
        let report = run_lambda_sweep(&chain, 50, &[0.0, 1.0], &cfg, 3, 2).unwrap();
        assert_eq!(report.rows.len(), 10);
        assert!(report.rows.iter().all(|r| r.runs > 0));
    }
}
