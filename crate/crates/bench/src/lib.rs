//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use turnlens::synth::{generate_conversation, GeneratedConversation, Profile};

/// A baseline conversation of roughly `seconds` length.
pub fn conversation(seconds: f64, seed: u64) -> GeneratedConversation {
    let mut p = Profile::baseline("bench");
    p.target_duration = seconds;
    generate_conversation(&p, seed).expect("baseline profile is valid")
}

/// Two overlapping Gaussian-ish blobs with `dim` features, labels +1/-1.
pub fn blobs(n: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let x = y
        .iter()
        .map(|&label| (0..dim).map(|j| rng.random_range(-1.0..1.0) + if j == 0 { 0.6 * label } else { 0.0 }).collect())
        .collect();
    (x, y)
}

/// One noisy feature column with a weak dependence on binary labels.
pub fn labeled_column(n: usize, seed: u64) -> (Vec<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let values = labels.iter().map(|&y| rng.random_range(0.0..1.0) + 0.3 * y as f64).collect();
    (values, labels)
}
