use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gan::svd_bases;

/// Paired `F x T` matrices with uniform `[0, 1)` control entries and a
/// dysarthric side equal to control plus `shift`.
pub fn shifted_pairs(n: usize, f: usize, t: usize, shift: f64, seed: u64) -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let c = DMatrix::from_fn(f, t, |_, _| rng.random_range(0.0..1.0));
            let d = c.add_scalar(shift);
            (c, d)
        })
        .collect()
}

/// Spectral-basis blocks of random `F x F` magnitude matrices truncated to
/// `k` bases, with a dysarthric twin of each block whose first basis is
/// negated.
pub fn negated_column_blocks(n: usize, f: usize, k: usize, seed: u64) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut control = Vec::with_capacity(n);
    let mut dys = Vec::with_capacity(n);
    for _ in 0..n {
        let m = DMatrix::from_fn(f, f, |_, _| rng.random_range(0.0..1.0));
        let u = svd_bases(&m, k).expect("k fits a square matrix").u;
        let mut flipped = u.clone();
        flipped.column_mut(0).neg_mut();
        control.push(u);
        dys.push(flipped);
    }
    (control, dys)
}

/// Mean absolute difference between equally shaped matrices.
pub fn mean_l1(pairs: impl IntoIterator<Item = (DMatrix<f64>, DMatrix<f64>)>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in pairs {
        n += b.len();
        sum += (a - b).abs().sum();
    }
    sum / n.max(1) as f64
}
