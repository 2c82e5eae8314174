#![allow(dead_code)]

use block_scca::linalg::{gaussian_matrix, rng_from_seed, Matrix};
use block_scca::model::{SparsityPattern, ViewMatrix};
use rand::Rng;

pub fn gauss(rows: usize, cols: usize, seed: u64) -> Matrix {
    gaussian_matrix(rows, cols, &mut rng_from_seed(seed))
}

/// Two standardized views sharing one latent factor.
pub fn coupled_views(n: usize, p1: usize, p2: usize, seed: u64) -> (ViewMatrix, ViewMatrix) {
    let f = gauss(n, 1, seed ^ 0x5eed);
    let mut x1 = gauss(n, p1, seed);
    let mut x2 = gauss(n, p2, seed.wrapping_add(1));
    for k in 0..p1.min(3) {
        x1.column_mut(k).scaled_add(2.0, &f.column(0));
    }
    for k in 0..p2.min(3) {
        x2.column_mut(k).scaled_add(2.0, &f.column(0));
    }
    let names = |p: usize| (1..=p).map(|j| format!("f{j}")).collect::<Vec<_>>();
    (
        ViewMatrix::raw(x1, names(p1)).unwrap().standardized().unwrap(),
        ViewMatrix::raw(x2, names(p2)).unwrap().standardized().unwrap(),
    )
}

/// Random mask with at least one active entry per column.
pub fn random_pattern(p: usize, d: usize, density: f64, seed: u64) -> SparsityPattern {
    let mut rng = rng_from_seed(seed);
    let mut mask = ndarray::Array2::from_shape_fn((p, d), |_| rng.random::<f64>() < density);
    for j in 0..d {
        let i = rng.random_range(0..p);
        mask[[i, j]] = true;
    }
    SparsityPattern::new(mask)
}

/// Largest drop between successive values.
pub fn worst_drop(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).iter().fold(0.0, |m, v| m.max(v.abs()))
}
