//! File formats: chain and checkpoint JSON, the line-based dataset format,
//! and the CSV report renderings.
//!
//! All floating-point CSV output goes through [`fmt_sig`], which keeps at
//! least 12 significant digits.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::EstimateReport;
use crate::markov::{Dataset, MarkovChain, ProbMatrix, Trajectory};
use crate::scalar::Scalar;
use crate::trainer::{TabularClassifier, TrainReport};

/// Formats a float with 13 significant digits.
pub fn fmt_sig(x: f64) -> String {
    format!("{x:.12e}")
}

/// JSON schema of a chain file.
#[derive(Debug, Serialize, Deserialize)]
pub struct ChainFile {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

fn matrix_from_rows<T: Scalar>(
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
    name: &str,
) -> Result<Array2<T>> {
    if rows.len() != nrows {
        return Err(Error::Dimension(format!(
            "{name} has {} rows, expected {nrows}",
            rows.len()
        )));
    }
    let mut out = Array2::zeros((nrows, ncols));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::Dimension(format!(
                "{name} row {} has {} entries, expected {ncols}",
                i + 1,
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            out[(i, j)] = T::from_f64_lossy(v);
        }
    }
    Ok(out)
}

/// Parses a chain from its JSON document.
pub fn chain_from_json<T: Scalar>(json: &str) -> Result<MarkovChain<T>> {
    let file: ChainFile = serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
    let q = matrix_from_rows(&file.q, file.m, file.m, "Q")?;
    let r = matrix_from_rows(&file.r, file.m, file.k, "R")?;
    if file.initial.len() != file.m {
        return Err(Error::Dimension(format!(
            "initial has {} entries, expected {}",
            file.initial.len(),
            file.m
        )));
    }
    let initial = Array1::from_iter(file.initial.iter().map(|&v| T::from_f64_lossy(v)));
    MarkovChain::new(q, r, initial)
}

pub fn read_chain<T: Scalar>(path: &Path) -> Result<MarkovChain<T>> {
    chain_from_json(&fs::read_to_string(path)?)
}

pub fn chain_to_json<T: Scalar>(chain: &MarkovChain<T>) -> String {
    let file = ChainFile {
        m: chain.num_states(),
        k: chain.num_classes(),
        q: rows_to_f64(chain.q()),
        r: rows_to_f64(chain.r()),
        initial: chain.initial().iter().map(|v| v.to_f64_lossy()).collect(),
    };
    serde_json::to_string_pretty(&file).expect("chain file serializes")
}

pub fn write_chain<T: Scalar>(path: &Path, chain: &MarkovChain<T>) -> Result<()> {
    fs::write(path, chain_to_json(chain) + "\n")?;
    Ok(())
}

fn rows_to_f64<T: Scalar>(a: &Array2<T>) -> Vec<Vec<f64>> {
    a.rows()
        .into_iter()
        .map(|row| row.iter().map(|v| v.to_f64_lossy()).collect())
        .collect()
}

/// Renders a dataset in the line format `label,s_1 s_2 ... s_T`.
pub fn dataset_to_lines(data: &Dataset) -> String {
    let mut out = String::new();
    for traj in data.trajectories() {
        let states: Vec<String> = traj.states.iter().map(|s| s.to_string()).collect();
        out.push_str(&format!("{},{}\n", traj.label, states.join(" ")));
    }
    out
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    fs::write(path, dataset_to_lines(data))?;
    Ok(())
}

/// Parses the line format. When `m` or `k` are not given they are inferred
/// as the largest index present; when given, out-of-range indices are
/// rejected.
pub fn dataset_from_lines(text: &str, m: Option<usize>, k: Option<usize>) -> Result<Dataset> {
    let mut trajectories = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (label_str, states_str) = line.split_once(',').ok_or_else(|| {
            Error::Parse(format!("line {}: expected `label,states`", lineno + 1))
        })?;
        let label: usize = label_str
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad label `{label_str}`", lineno + 1)))?;
        let states = states_str
            .split_whitespace()
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("line {}: bad state `{s}`", lineno + 1)))
            })
            .collect::<Result<Vec<usize>>>()?;
        if states.is_empty() {
            return Err(Error::Parse(format!("line {}: no states", lineno + 1)));
        }
        trajectories.push(Trajectory { states, label });
    }
    if trajectories.is_empty() {
        return Err(Error::InvalidInput("dataset file contains no trajectories".into()));
    }
    let max_state = trajectories
        .iter()
        .flat_map(|t| t.states.iter().copied())
        .max()
        .unwrap_or(0);
    let max_label = trajectories.iter().map(|t| t.label).max().unwrap_or(0);
    Dataset::new(
        trajectories,
        m.unwrap_or(max_state),
        k.unwrap_or(max_label),
    )
}

pub fn read_dataset(path: &Path, m: Option<usize>, k: Option<usize>) -> Result<Dataset> {
    dataset_from_lines(&fs::read_to_string(path)?, m, k)
}

/// Renders an estimate report as CSV:
/// `state,support,p_1,...,p_K,fallback_flag`.
pub fn estimate_report_to_csv<T: Scalar>(report: &EstimateReport<T>) -> String {
    let k = report.estimate.cols();
    let mut out = String::from("state,support");
    for c in 1..=k {
        out.push_str(&format!(",p_{c}"));
    }
    out.push_str(",fallback_flag\n");
    for s in 0..report.estimate.rows() {
        out.push_str(&format!("{},{}", s + 1, report.per_state_support[s]));
        for c in 0..k {
            out.push(',');
            out.push_str(&fmt_sig(report.estimate.values()[(s, c)].to_f64_lossy()));
        }
        out.push_str(&format!(",{}\n", report.is_fallback(s) as u8));
    }
    out
}

/// Renders a probability matrix as CSV: `state,p_1,...,p_K`.
pub fn prob_matrix_to_csv<T: Scalar>(p: &ProbMatrix<T>) -> String {
    let mut out = String::from("state");
    for c in 1..=p.cols() {
        out.push_str(&format!(",p_{c}"));
    }
    out.push('\n');
    for s in 0..p.rows() {
        out.push_str(&(s + 1).to_string());
        for c in 0..p.cols() {
            out.push(',');
            out.push_str(&fmt_sig(p.values()[(s, c)].to_f64_lossy()));
        }
        out.push('\n');
    }
    out
}

/// Renders a training trace as CSV: `epoch,mean_loss[,mean_successive_kl]`.
pub fn train_report_to_csv<T: Scalar>(report: &TrainReport<T>) -> String {
    let mut out = String::from("epoch,mean_loss");
    if report.holdout_kl.is_some() {
        out.push_str(",mean_successive_kl");
    }
    out.push('\n');
    for (epoch, loss) in report.trace.iter().enumerate() {
        out.push_str(&format!("{},{}", epoch + 1, fmt_sig(loss.to_f64_lossy())));
        if let Some(kls) = &report.holdout_kl {
            out.push(',');
            out.push_str(&fmt_sig(kls[epoch].to_f64_lossy()));
        }
        out.push('\n');
    }
    out
}

/// JSON schema of a model checkpoint.
#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointFile {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub theta: Vec<Vec<f64>>,
}

pub fn checkpoint_to_json<T: Scalar>(model: &TabularClassifier<T>) -> String {
    let file = CheckpointFile {
        m: model.num_states(),
        k: model.num_classes(),
        theta: rows_to_f64(model.theta()),
    };
    serde_json::to_string_pretty(&file).expect("checkpoint serializes")
}

pub fn write_checkpoint<T: Scalar>(path: &Path, model: &TabularClassifier<T>) -> Result<()> {
    fs::write(path, checkpoint_to_json(model) + "\n")?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar>(path: &Path) -> Result<TabularClassifier<T>> {
    let file: CheckpointFile = serde_json::from_str(&fs::read_to_string(path)?)
        .map_err(|e| Error::Parse(e.to_string()))?;
    let theta = matrix_from_rows(&file.theta, file.m, file.k, "theta")?;
    TabularClassifier::from_theta(theta)
}

/// Renders a metric table as CSV:
/// `prefix_len,accuracy,nll,roc_auc,mean_kl`. `prefix_len` of `full` means
/// the whole sequence.
pub fn metric_table_to_csv(rows: &[(Option<usize>, f64, f64, f64, f64)]) -> String {
    let mut out = String::from("prefix_len,accuracy,nll,roc_auc,mean_kl\n");
    for (prefix, acc, nll, auc, kl) in rows {
        let prefix = prefix.map_or("full".to_string(), |p| p.to_string());
        out.push_str(&format!(
            "{prefix},{},{},{},{}\n",
            fmt_sig(*acc),
            fmt_sig(*nll),
            fmt_sig(*auc),
            fmt_sig(*kl)
        ));
    }
    out
}
