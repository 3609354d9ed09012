//! Deterministic inputs shared by the benchmarks in `benches/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` standard-uniform scores from a fixed seed.
pub fn scores(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random()).collect()
}

/// `m` p-values, the first `signals` of them shrunk towards zero.
pub fn pvalues(m: usize, signals: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|j| {
            let u: f64 = rng.random();
            if j < signals {
                u * 1e-3
            } else {
                u
            }
        })
        .collect()
}

/// Loss rows on `k` evenly spaced lambdas in `[0, 1]`; each row is a step
/// from 1 to 0 at a random point, so losses are non-increasing in lambda.
pub fn loss_rows(n: usize, k: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambdas: Vec<f64> = (0..k).map(|j| j as f64 / (k - 1) as f64).collect();
    let rows = (0..n)
        .map(|_| {
            let cut: f64 = rng.random();
            lambdas
                .iter()
                .map(|&l| if l < cut { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    (lambdas, rows)
}
