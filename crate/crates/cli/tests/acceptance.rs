//! Determinism acceptance check: every command produces byte-identical
//! output when rerun with the same inputs, and a study replays byte-identically
//! from its own manifest.

use std::fs;
use std::path::Path;
use std::process::Command;

use ndarray::{arr1, arr2};
use tempfile::TempDir;

use ticl::io::write_chain;
use ticl::MarkovChainF64;

fn run(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_ticl"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let chain = dir.path().join("chain.json");
    write_chain(
        &chain,
        &MarkovChainF64::new(
            arr2(&[[0.2, 0.3], [0.1, 0.4]]),
            arr2(&[[0.4, 0.1], [0.2, 0.3]]),
            arr1(&[0.5, 0.5]),
        )
        .unwrap(),
    )
    .unwrap();
    let chain = chain.to_str().unwrap();

    // solve
    let (a, b) = (dir.path().join("p1.csv"), dir.path().join("p2.csv"));
    run(&["solve", chain, "--out", a.to_str().unwrap()]);
    run(&["solve", chain, "--out", b.to_str().unwrap()]);
    assert_eq!(read(&a), read(&b), "solve output differs between reruns");

    // sample
    let (a, b) = (dir.path().join("d1.txt"), dir.path().join("d2.txt"));
    run(&["sample", chain, "--n", "200", "--seed", "9", "--out", a.to_str().unwrap()]);
    run(&["sample", chain, "--n", "200", "--seed", "9", "--out", b.to_str().unwrap()]);
    assert_eq!(read(&a), read(&b), "sample output differs between reruns");
    let data = a.to_str().unwrap().to_string();

    // estimate, both methods
    for method in ["direct", "indirect"] {
        let (a, b) = (
            dir.path().join(format!("e1-{method}.csv")),
            dir.path().join(format!("e2-{method}.csv")),
        );
        run(&["estimate", &data, "--method", method, "--out", a.to_str().unwrap()]);
        run(&["estimate", &data, "--method", method, "--out", b.to_str().unwrap()]);
        assert_eq!(read(&a), read(&b), "estimate {method} differs between reruns");
    }

    // train
    let (ta, tb) = (dir.path().join("t1"), dir.path().join("t2"));
    for out_dir in [&ta, &tb] {
        run(&[
            "train", &data,
            "--lambda", "0.5",
            "--epochs", "30",
            "--seed", "4",
            "--out-dir", out_dir.to_str().unwrap(),
        ]);
    }
    for file in ["train_report.csv", "model.json", "manifest.json"] {
        assert_eq!(read(&ta.join(file)), read(&tb.join(file)), "train {file} differs");
    }

    // study, plus replay from the emitted manifest
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"W_values":[1,2],"T":2,"runs":16,"seed":11}"#).unwrap();
    let (sa, sb, sc) = (
        dir.path().join("s1"),
        dir.path().join("s2"),
        dir.path().join("s3"),
    );
    for out_dir in [&sa, &sb] {
        run(&[
            "study", "mse-ratio",
            "--config", config.to_str().unwrap(),
            "--out-dir", out_dir.to_str().unwrap(),
        ]);
    }
    run(&[
        "study", "mse-ratio",
        "--config", sa.join("manifest.json").to_str().unwrap(),
        "--out-dir", sc.to_str().unwrap(),
    ]);
    for out_dir in [&sb, &sc] {
        for file in ["mse-ratio.csv", "manifest.json"] {
            assert_eq!(
                read(&sa.join(file)),
                read(&out_dir.join(file)),
                "study {file} differs ({} vs {})",
                sa.display(),
                out_dir.display()
            );
        }
    }

    println!("PASS: solve, sample, estimate, train, and study reruns (including manifest replay) are byte-identical");
}
