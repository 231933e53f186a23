//! CLI contract tests: exit codes, file formats, and flag handling.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ndarray::{arr1, arr2};
use tempfile::TempDir;

use ticl::io::write_chain;
use ticl::MarkovChainF64;

fn ticl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ticl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process exits normally")
}

fn two_state_chain(path: &Path) {
    let chain = MarkovChainF64::new(
        arr2(&[[0.2, 0.3], [0.1, 0.4]]),
        arr2(&[[0.4, 0.1], [0.2, 0.3]]),
        arr1(&[0.5, 0.5]),
    )
    .unwrap();
    write_chain(path, &chain).unwrap();
}

#[test]
fn solve_writes_probability_csv() {
    let dir = TempDir::new().unwrap();
    let chain = dir.path().join("chain.json");
    two_state_chain(&chain);
    let out = dir.path().join("probs.csv");
    for method in ["fixed-point", "closed-form"] {
        let res = ticl(&[
            "solve",
            chain.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--method",
            method,
        ]);
        assert_eq!(code(&res), 0, "{method}: {res:?}");
        let text = fs::read_to_string(&out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "state,p_1,p_2");
        assert_eq!(lines.count(), 2);
    }
}

#[test]
fn solve_rejects_invalid_chain_with_exit_2() {
    let dir = TempDir::new().unwrap();
    let chain = dir.path().join("bad.json");
    fs::write(
        &chain,
        r#"{"M":1,"K":2,"Q":[[0.5]],"R":[[0.9,0.1]],"initial":[1.0]}"#,
    )
    .unwrap();
    let res = ticl(&["solve", chain.to_str().unwrap(), "--out", dir.path().join("o.csv").to_str().unwrap()]);
    assert_eq!(code(&res), 2);
}

#[test]
fn solve_non_convergence_exits_3() {
    let dir = TempDir::new().unwrap();
    let chain = dir.path().join("chain.json");
    two_state_chain(&chain);
    let res = ticl(&[
        "solve",
        chain.to_str().unwrap(),
        "--out",
        dir.path().join("o.csv").to_str().unwrap(),
        "--tol",
        "1e-12",
        "--max-iters",
        "1",
    ]);
    assert_eq!(code(&res), 3);
}

#[test]
fn missing_input_file_exits_2() {
    let dir = TempDir::new().unwrap();
    let res = ticl(&[
        "solve",
        dir.path().join("nope.json").to_str().unwrap(),
        "--out",
        dir.path().join("o.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 2);
}

#[test]
fn sample_writes_one_line_per_trajectory() {
    let dir = TempDir::new().unwrap();
    let chain = dir.path().join("chain.json");
    two_state_chain(&chain);
    let out = dir.path().join("data.txt");
    let res = ticl(&[
        "sample",
        chain.to_str().unwrap(),
        "--n",
        "7",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 7);
    for line in text.lines() {
        let (label, states) = line.split_once(',').unwrap();
        assert!(label.parse::<usize>().unwrap() >= 1);
        assert!(states.split(' ').all(|s| s.parse::<usize>().is_ok()));
    }
}

#[test]
fn sample_zero_trajectories_exits_2() {
    let dir = TempDir::new().unwrap();
    let chain = dir.path().join("chain.json");
    two_state_chain(&chain);
    let res = ticl(&[
        "sample",
        chain.to_str().unwrap(),
        "--n",
        "0",
        "--out",
        dir.path().join("d.txt").to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 2);
}

#[test]
fn estimate_direct_reports_label_fractions() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data.txt");
    fs::write(&data, "1,1 3\n2,2 3\n").unwrap();
    let out = dir.path().join("est.csv");
    let res = ticl(&[
        "estimate",
        data.to_str().unwrap(),
        "--method",
        "direct",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "state,support,p_1,p_2,fallback_flag");
    assert!(rows[1].starts_with("1,1,1.0000000000"));
    assert!(rows[3].starts_with("3,2,5.0000000000")); // 0.5 each way
}

#[test]
fn train_requires_exactly_one_target_flag() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data.txt");
    fs::write(&data, "1,1 3\n2,2 3\n").unwrap();
    let neither = ticl(&["train", data.to_str().unwrap()]);
    assert_eq!(code(&neither), 2);
    let both = ticl(&[
        "train",
        data.to_str().unwrap(),
        "--lambda",
        "0.5",
        "--lookahead",
        "1",
    ]);
    assert_eq!(code(&both), 2);
}

#[test]
fn train_writes_report_model_and_manifest() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data.txt");
    fs::write(&data, "1,1 3\n2,2 3\n1,1 3\n2,2 3\n").unwrap();
    let out_dir = dir.path().join("run");
    let res = ticl(&[
        "train",
        data.to_str().unwrap(),
        "--lookahead",
        "1",
        "--epochs",
        "20",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{res:?}");
    let report = fs::read_to_string(out_dir.join("train_report.csv")).unwrap();
    assert!(report.starts_with("epoch,mean_loss"));
    assert_eq!(report.lines().count(), 21);
    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["M"], 3);
    assert_eq!(model["K"], 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    // lookahead L = 1 maps to lambda = L / (1 + L) = 0.5.
    assert_eq!(manifest["lambda"], 0.5);
}

#[test]
fn train_diverging_run_exits_3() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data.txt");
    fs::write(&data, "1,1 3\n2,2 3\n").unwrap();
    // An overflowing learning rate (parses to infinity) makes the first
    // update non-finite; clamped log terms keep any finite rate stable.
    let res = ticl(&[
        "train",
        data.to_str().unwrap(),
        "--lambda",
        "1",
        "--lr",
        "1e309",
        "--epochs",
        "50",
        "--out-dir",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 3);
}

#[test]
fn study_writes_csv_and_manifest() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"W_values":[1,2],"T":2,"runs":10,"seed":5}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("study");
    let res = ticl(&[
        "study",
        "mse-ratio",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{res:?}");
    let csv = fs::read_to_string(out_dir.join("mse-ratio.csv")).unwrap();
    assert!(csv.starts_with("W,metric,mean,ci_lo,ci_hi,runs"));
    assert_eq!(csv.lines().count(), 7);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["study"], "mse-ratio");
    assert_eq!(manifest["config"]["runs"], 10);
}

#[test]
fn study_rejects_unknown_config_fields() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"W_values":[1],"T":2,"runs":4,"seed":5,"typo_field":1}"#,
    )
    .unwrap();
    let res = ticl(&[
        "study",
        "mse-ratio",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        dir.path().join("s").to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 2);
}
