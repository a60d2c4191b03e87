//! Fixtures shared by the benchmarks.

use battleship_core::matcher::PairEncoding;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` random encodings of dimension `d` with uniform confidences.
pub fn random_encodings(n: usize, d: usize, seed: u64) -> Vec<PairEncoding> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let v = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            PairEncoding::new(i.to_string(), v, rng.gen())
        })
        .collect()
}

/// Gaussian-ish blobs for clustering benchmarks.
pub fn blobs(n: usize, d: usize, centres: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..centres).map(|_| (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
    (0..n)
        .map(|i| means[i % centres].iter().map(|m| m + rng.gen_range(-1.0..1.0)).collect())
        .collect()
}
