//! Random fixtures shared by the benchmarks.

use mmncl_core::rng::rng_for;
use mmncl_core::sampling::BatchIndex;
use ndarray::{Array2, Array3};
use rand::Rng;

/// `k x c` matrix with unit-norm rows.
pub fn unit_rows(seed: u64, k: usize, c: usize) -> Array2<f64> {
    let mut rng = rng_for(seed, &[]);
    let mut h = Array2::<f64>::from_shape_simple_fn((k, c), || rng.random_range(-1.0..1.0));
    for mut row in h.rows_mut() {
        let norm: f64 = row.dot(&row).sqrt();
        row /= norm;
    }
    h
}

/// `k` notes spread over `k / notes_per_stay` stays with target times in a
/// two-day range.
pub fn batch_indices(seed: u64, k: usize, notes_per_stay: usize) -> Vec<BatchIndex> {
    let mut rng = rng_for(seed, &[1]);
    (0..k)
        .map(|i| BatchIndex {
            stay_index: i / notes_per_stay,
            note_index: i % notes_per_stay,
            target_time: rng.random_range(0.0..48.0),
        })
        .collect()
}

pub fn windows(seed: u64, k: usize, w: usize, d: usize) -> Array3<f64> {
    let mut rng = rng_for(seed, &[2]);
    Array3::from_shape_simple_fn((k, w, d), || rng.random_range(-2.0..2.0))
}
