//! Input fixtures shared by the benchmarks.

use ondetect_core::dataset::{Label, Provenance, TrainingSet};
use ondetect_core::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Alternating labels with roughly `normal_share` normals.
pub fn random_labels(n: usize, normal_share: f64, seed: u64) -> Vec<Label> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            if rng.random_bool(normal_share) {
                Label::Normal
            } else {
                Label::Attack
            }
        })
        .collect()
}

/// Bimodal similarity scores like those seen after training.
pub fn bimodal_scores(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let centre = if rng.random_bool(0.55) { 0.9 } else { 0.3 };
            (centre + rng.random_range(-0.1..0.1f64)).clamp(-1.0, 1.0)
        })
        .collect()
}

pub fn training_set(rows: usize, dim: usize, seed: u64) -> TrainingSet {
    let x = random_matrix(rows, dim, seed);
    let labels = random_labels(rows, 0.5, seed + 1);
    let mut set = TrainingSet::new(dim);
    for (row, y) in x.iter_rows().zip(labels) {
        set.push(row, y, Provenance::True).expect("dimension matches");
    }
    set
}
