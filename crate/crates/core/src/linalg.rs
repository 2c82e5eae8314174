//! Dense kernels shared by both estimation stages: polar factors, seeded
//! Stiefel draws, cross-covariances and column standardization.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::ViewMatrix;

/// Dense row-major matrix of finite reals.
pub type Matrix = Array2<f64>;

/// Singular values below this fraction of the largest one make a polar factor undefined.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Tolerance on `‖QᵀQ − I‖_max` accepted for a Stiefel point.
pub const STIEFEL_TOLERANCE: f64 = 1e-8;

/// A `p × d` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelBlock(Matrix);

impl StiefelBlock {
    /// Wraps `base`, checking `p ≥ d` and orthonormality to [`STIEFEL_TOLERANCE`].
    pub fn new(base: Matrix) -> Result<Self> {
        let (p, d) = base.dim();
        if p < d || d == 0 {
            return Err(Error::Dimension(format!("Stiefel block needs p >= d >= 1, got {p}x{d}")));
        }
        let dev = orthonormality_deviation(&base.view());
        if dev > STIEFEL_TOLERANCE {
            return Err(Error::Dimension(format!("columns are not orthonormal (deviation {dev:e})")));
        }
        Ok(StiefelBlock(base))
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

impl std::ops::Deref for StiefelBlock {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// `‖QᵀQ − I‖_max`.
pub fn orthonormality_deviation(q: &ArrayView2<f64>) -> f64 {
    let gram = q.t().dot(q);
    let mut worst = 0.0f64;
    for ((i, j), v) in gram.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((v - target).abs());
    }
    worst
}

fn to_nalgebra(m: &ArrayView2<f64>) -> DMatrix<f64> {
    let (r, c) = m.dim();
    DMatrix::from_fn(r, c, |i, j| m[[i, j]])
}

/// Polar factor `U·Vᵀ` of the thin SVD `M = U·Σ·Vᵀ`, the orthonormal frame
/// maximizing `tr(QᵀM)`.
pub fn polar(m: &ArrayView2<f64>) -> Result<StiefelBlock> {
    let (p, d) = m.dim();
    if p < d || d == 0 {
        return Err(Error::Dimension(format!("polar needs p >= d >= 1, got {p}x{d}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Dimension("polar input has non-finite entries".into()));
    }
    let svd = to_nalgebra(m).svd(true, true);
    let largest = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let smallest = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let floor = if largest > 0.0 { RANK_TOLERANCE * largest } else { 1e-300 };
    if !(smallest >= floor) || largest < 1e-300 {
        return Err(Error::RankDeficient { smallest, largest });
    }
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let q = u * v_t;
    Ok(StiefelBlock(Array2::from_shape_fn((p, d), |(i, j)| q[(i, j)])))
}

/// Polar factor restricted to the columns listed in `alive`; other columns are zero.
pub(crate) fn polar_columns(m: &ArrayView2<f64>, alive: &[usize]) -> Result<Matrix> {
    let mut out = Array2::zeros(m.dim());
    if alive.is_empty() {
        return Ok(out);
    }
    let sub = m.select(Axis(1), alive);
    let q = polar(&sub.view())?;
    for (k, &j) in alive.iter().enumerate() {
        out.column_mut(j).assign(&q.column(k));
    }
    Ok(out)
}

/// Singular values in decreasing order.
pub fn singular_values(m: &ArrayView2<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = to_nalgebra(m).singular_values().iter().cloned().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// The `d` leading left singular vectors of `m`, by decreasing singular value.
pub fn leading_left_singular_vectors(m: &ArrayView2<f64>, d: usize) -> Result<Matrix> {
    let (p, q) = m.dim();
    if d == 0 || d > p.min(q) {
        return Err(Error::Dimension(format!(
            "cannot take {d} singular vectors of a {p}x{q} matrix"
        )));
    }
    let svd = to_nalgebra(m).svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    Ok(Array2::from_shape_fn((p, d), |(i, j)| u[(i, order[j])]))
}

/// SplitMix64 finalizer, used to derive independent stream seeds from a master seed.
fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives a child seed from `master` and a path of stream indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(master), |acc, &k| splitmix(acc ^ splitmix(k)))
}

/// The project's random generator: ChaCha with 8 rounds, seeded from a `u64`.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `p × d` matrix of independent standard normal draws, filled row by row.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = Array2::zeros((rows, cols));
    for v in m.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    m
}

/// Seeded random point on the Stiefel manifold: the polar factor of a Gaussian matrix.
pub fn random_stiefel(p: usize, d: usize, seed: u64) -> Result<StiefelBlock> {
    if p < d || d == 0 {
        return Err(Error::Dimension(format!("random_stiefel needs p >= d >= 1, got p={p}, d={d}")));
    }
    let mut rng = rng_from_seed(seed);
    let g = gaussian_matrix(p, d, &mut rng);
    polar(&g.view())
}

/// Sample cross-covariance `(1/n)·X_rᵀ·X_s`.
pub fn cross_covariance(xr: &ArrayView2<f64>, xs: &ArrayView2<f64>) -> Result<Matrix> {
    let n = xr.nrows();
    if xs.nrows() != n {
        return Err(Error::Dimension(format!(
            "row counts differ: {} vs {}",
            n,
            xs.nrows()
        )));
    }
    if n < 2 {
        return Err(Error::Dimension(format!("need at least 2 samples, got {n}")));
    }
    Ok(xr.t().dot(xs) / n as f64)
}

/// Centers every column and scales non-constant columns to unit sample
/// standard deviation (divisor `n − 1`). Constant columns are only centered
/// and reported in `constant_columns`.
pub fn standardize(x: &ArrayView2<f64>) -> Result<ViewMatrix> {
    let (n, p) = x.dim();
    if n < 2 {
        return Err(Error::Dimension(format!("need at least 2 samples, got {n}")));
    }
    let mut data = x.to_owned();
    let mut constant = Vec::new();
    for (j, mut col) in data.axis_iter_mut(Axis(1)).enumerate() {
        let mean = col.sum() / n as f64;
        col.mapv_inplace(|v| v - mean);
        let ss: f64 = col.iter().map(|v| v * v).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        // relative test so that columns equal up to rounding count as constant
        let scale = mean.abs().max(1.0);
        if sd <= 1e-12 * scale {
            col.fill(0.0);
            constant.push(j);
        } else {
            col.mapv_inplace(|v| v / sd);
        }
    }
    let names = (1..=p).map(|j| format!("V{j}")).collect();
    Ok(ViewMatrix {
        data,
        feature_names: names,
        standardized: true,
        constant_columns: constant,
    })
}
