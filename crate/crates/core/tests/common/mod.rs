//! Shared generators for the integration suites.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use ticl::markov::{Dataset, MarkovChain};

/// Random valid chain with `1..=max_m` transient states and `2..=max_k`
/// classes. Every state gets a forward edge toward absorption plus direct
/// absorption mass, so validity holds by construction and trajectories stay
/// short.
pub fn random_chain(rng: &mut ChaCha8Rng, max_m: usize, max_k: usize) -> MarkovChain<f64> {
    let m = rng.gen_range(1..=max_m);
    let k = rng.gen_range(2..=max_k);
    let mut q = Array2::<f64>::zeros((m, m));
    let mut r = Array2::<f64>::zeros((m, k));
    for i in 0..m {
        let mut weights: Vec<f64> = (0..m + k).map(|_| rng.gen::<f64>() * rng.gen::<f64>()).collect();
        if i + 1 < m {
            weights[i + 1] += 1.0;
        }
        weights[m + rng.gen_range(0..k)] += 0.5;
        let total: f64 = weights.iter().sum();
        for (j, w) in weights.iter().enumerate() {
            if j < m {
                q[(i, j)] = w / total;
            } else {
                r[(i, j - m)] = w / total;
            }
        }
    }
    let raw: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() + 0.05).collect();
    let total: f64 = raw.iter().sum();
    let initial = Array1::from_iter(raw.into_iter().map(|v| v / total));
    let chain = MarkovChain::new(q, r, initial).expect("generated dimensions are consistent");
    assert!(chain.validate().is_ok(), "generator must produce valid chains");
    chain
}

/// Random dataset sampled from a fresh random chain.
#[allow(dead_code)]
pub fn random_dataset(
    rng: &mut ChaCha8Rng,
    max_m: usize,
    max_k: usize,
    n: usize,
    seed: u64,
) -> Dataset {
    random_chain(rng, max_m, max_k)
        .sample_trajectories(n, seed)
        .expect("valid chains sample without step-cap hits")
}
