//! Planted-support benchmark: two views sharing a low-rank signal on known
//! feature blocks, plus the accuracy metrics used to score fits on it.
//!
//! Both views are drawn as `X_i = G·D^{1/2}·V_iᵀ` from one shared Gaussian
//! matrix `G`, so `Cov(X_i) = V_iDV_iᵀ` and `Cov(X1, X2) = V_1DV_2ᵀ`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cross_covariance, derive_seed, gaussian_matrix, rng_from_seed, singular_values, Matrix};
use crate::model::{pearson, FitResult, Penalty, SparsityParams, SpectralWeights, ViewMatrix};
use crate::pipeline::{fit_two_view, FitConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub n: usize,
    /// Features per view; must be a multiple of 10.
    pub p: usize,
    /// Noise eigenvalue shared by columns 3..p.
    pub sigma: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub seed: u64,
}

impl SimConfig {
    /// `σ1 = 2`, `σ2 = 1`.
    pub fn new(n: usize, p: usize, sigma: f64, seed: u64) -> Self {
        SimConfig {
            n,
            p,
            sigma,
            sigma1: 2.0,
            sigma2: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || !self.p.is_multiple_of(10) {
            return Err(Error::Config(format!("p must be a positive multiple of 10, got {}", self.p)));
        }
        if self.n < 2 {
            return Err(Error::Config(format!("need at least 2 samples, got {}", self.n)));
        }
        if !(self.sigma > 0.0 && self.sigma1 > 0.0 && self.sigma2 > 0.0) {
            return Err(Error::Config("eigenvalues must be positive".into()));
        }
        Ok(())
    }
}

/// Planted unit loading vectors: `truth[i][j]` is `v_{i+1,j+1}` normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub vectors: [[Array1<f64>; 2]; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimInstance {
    pub x1: ViewMatrix,
    pub x2: ViewMatrix,
    pub truth: Truth,
    /// `λ3/λ2` from the singular values of the sample `C12`.
    pub sigma_ratio: f64,
    pub config: SimConfig,
}

fn block(p: usize, start: usize, len: usize) -> Array1<f64> {
    Array1::from_shape_fn(p, |i| if i >= start && i < start + len { 1.0 } else { 0.0 })
}

/// Indicator columns of `V1` and `V2`, unnormalized.
pub fn planted_columns(p: usize) -> [[Array1<f64>; 2]; 2] {
    let b = p / 10;
    [
        [block(p, 0, b), block(p, b, b)],
        [block(p, p - b, b), block(p, p - 2 * b, b)],
    ]
}

fn normalized(v: &Array1<f64>) -> Array1<f64> {
    v / v.dot(v).sqrt()
}

/// `V_i`: the two planted columns followed by standard normal columns.
fn loading_matrix(cols: &[Array1<f64>; 2], rng: &mut rand_chacha::ChaCha8Rng) -> Matrix {
    let p = cols[0].len();
    let mut v = Array2::zeros((p, p));
    v.column_mut(0).assign(&cols[0]);
    v.column_mut(1).assign(&cols[1]);
    let rest = gaussian_matrix(p, p - 2, rng);
    v.slice_mut(ndarray::s![.., 2..]).assign(&rest);
    v
}

/// `V·D·Vᵀ` for the configured eigenvalues.
pub fn population_covariance(v: &ArrayView2<f64>, config: &SimConfig) -> Matrix {
    let d = eigenvalues(config);
    let mut vd = v.to_owned();
    for (k, mut col) in vd.axis_iter_mut(Axis(1)).enumerate() {
        col *= d[k];
    }
    vd.dot(&v.t())
}

fn eigenvalues(config: &SimConfig) -> Vec<f64> {
    let mut d = vec![config.sigma; config.p];
    d[0] = config.sigma1;
    d[1] = config.sigma2;
    d
}

fn names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("V{j}")).collect()
}

/// Draws the two loading matrices and the data; deterministic in `config.seed`.
pub fn generate_views(config: &SimConfig) -> Result<SimInstance> {
    config.validate()?;
    let (n, p) = (config.n, config.p);
    let planted = planted_columns(p);
    let mut rng = rng_from_seed(config.seed);
    let v1 = loading_matrix(&planted[0], &mut rng);
    let v2 = loading_matrix(&planted[1], &mut rng);
    let g = gaussian_matrix(n, p, &mut rng);
    let mut gd = g;
    for (k, mut col) in gd.axis_iter_mut(Axis(1)).enumerate() {
        col *= eigenvalues(config)[k].sqrt();
    }
    let x1 = gd.dot(&v1.t());
    let x2 = gd.dot(&v2.t());
    let c12 = cross_covariance(&x1.view(), &x2.view())?;
    let sv = singular_values(&c12.view());
    let sigma_ratio = sv[2] / sv[1];
    let truth = Truth {
        vectors: [
            [normalized(&planted[0][0]), normalized(&planted[0][1])],
            [normalized(&planted[1][0]), normalized(&planted[1][1])],
        ],
    };
    Ok(SimInstance {
        x1: ViewMatrix::raw(x1, names(p))?,
        x2: ViewMatrix::raw(x2, names(p))?,
        truth,
        sigma_ratio,
        config: config.clone(),
    })
}

/// `|corr(z_j, v_j)|` for `j = 1, 2`.
pub fn eval_truth_correlation(z: &ArrayView2<f64>, truth: &[Array1<f64>; 2]) -> Result<[f64; 2]> {
    if z.ncols() < 2 || truth.iter().any(|t| t.len() != z.nrows()) {
        return Err(Error::Dimension("need two directions matching the planted vectors".into()));
    }
    let mut out = [0.0; 2];
    for j in 0..2 {
        out[j] = pearson(&z.column(j), &truth[j].view())
            .ok_or(Error::DegenerateCovariate { direction: j })?
            .abs();
    }
    Ok(out)
}

/// `|corr(X·z_1, X·z_2)|`.
pub fn eval_within_orthogonality(x: &ArrayView2<f64>, z: &ArrayView2<f64>) -> Result<f64> {
    if z.ncols() < 2 || x.ncols() != z.nrows() {
        return Err(Error::Dimension("need two directions matching the view".into()));
    }
    let u = x.dot(z);
    pearson(&u.column(0), &u.column(1))
        .map(f64::abs)
        .ok_or(Error::DegenerateCovariate { direction: 1 })
}

/// `q`-quantile (`0 ≤ q ≤ 1`) by linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Penalties from the sufficient inactivity condition `‖c_i‖₂ ≤ γ/μ`: with
/// `γ_j = μ_j·q`, where `q` is the `(1 − keep)`-quantile of the norms,
/// at most a `keep` fraction of features per view can stay active.
pub fn sufficient_threshold_gamma(c12: &ArrayView2<f64>, mu: &SpectralWeights, keep: f64) -> Result<SparsityParams> {
    let row_norms: Vec<f64> = c12.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let col_norms: Vec<f64> = c12.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
    let q1 = quantile(&row_norms, 1.0 - keep);
    let q2 = quantile(&col_norms, 1.0 - keep);
    SparsityParams::new(
        mu.as_slice().iter().map(|m| m * q1).collect(),
        mu.as_slice().iter().map(|m| m * q2).collect(),
    )
}

/// Centered running median over a window of `window` points, shrinking at
/// the ends; `None` entries are skipped.
pub fn running_median(values: &[Option<f64>], window: usize) -> Vec<Option<f64>> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            let w: Vec<f64> = values[lo..hi].iter().flatten().copied().collect();
            (!w.is_empty()).then(|| quantile(&w, 0.5))
        })
        .collect()
}

fn ranks(v: &ArrayView1<f64>) -> Array1<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = Array1::zeros(v.len());
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let ra = ranks(&ArrayView1::from(a));
    let rb = ranks(&ArrayView1::from(b));
    pearson(&ra.view(), &rb.view())
}

/// Penalty choice for benchmark fits. The first candidate is
/// [`sufficient_threshold_gamma`] at `keep`; while the fit loses a direction,
/// the thresholds are multiplied by `backoff`, at most `max_steps` times.
/// Under the L0 penalty every `γ` is squared, which puts the activity
/// boundary `a² > γ/μ²` at the same place as the L1 boundary `|a| > γ/μ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PenaltyHeuristic {
    pub keep: f64,
    pub backoff: f64,
    pub max_steps: usize,
}

impl Default for PenaltyHeuristic {
    fn default() -> Self {
        PenaltyHeuristic {
            keep: 0.2,
            backoff: 0.75,
            max_steps: 12,
        }
    }
}

impl PenaltyHeuristic {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep > 0.0 && self.keep <= 1.0 && self.backoff > 0.0 && self.backoff < 1.0) {
            return Err(Error::Config("need 0 < keep <= 1 and 0 < backoff < 1".into()));
        }
        Ok(())
    }

    /// Fits standardized views, returning the penalties used and the fit.
    pub fn fit(&self, x1: &ViewMatrix, x2: &ViewMatrix, config: &FitConfig) -> Result<(SparsityParams, FitResult)> {
        self.validate()?;
        let c12 = cross_covariance(&x1.view(), &x2.view())?;
        let start = sufficient_threshold_gamma(&c12.view(), &config.weights()?, self.keep)?;
        let mut last = None;
        for step in 0..=self.max_steps {
            let f = self.backoff.powi(step as i32);
            let scale = |g: &f64| match config.penalty {
                Penalty::L1 => g * f,
                Penalty::L0 => (g * f).powi(2),
            };
            let params = SparsityParams::new(
                start.gamma1.iter().map(scale).collect(),
                start.gamma2.iter().map(scale).collect(),
            )?;
            match fit_two_view(x1, x2, &params, config) {
                Ok(fit) if fit.dead_directions.is_empty() => return Ok((params, fit)),
                Ok(fit) => {
                    last = Some(Error::DeadGradient {
                        directions: fit.dead_directions,
                    })
                }
                Err(e @ (Error::DeadGradient { .. } | Error::EmptySupport { .. })) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// How each simulated instance is fitted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEstimator {
    pub fit: FitConfig,
    pub penalty: PenaltyHeuristic,
}

impl SweepEstimator {
    pub fn new(fit: FitConfig, penalty: PenaltyHeuristic) -> Self {
        SweepEstimator { fit, penalty }
    }
}

/// Metrics of one fitted instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellMetrics {
    pub truth_corr: [f64; 2],
    pub within_corr: f64,
    pub params: SparsityParams,
}

/// Standardizes, fits with the penalty heuristic and scores one instance.
pub fn fit_and_score(inst: &SimInstance, est: &SweepEstimator) -> Result<CellMetrics> {
    if est.fit.d < 2 {
        return Err(Error::Config("the benchmark scores two directions; set d >= 2".into()));
    }
    let x1 = inst.x1.standardized()?;
    let x2 = inst.x2.standardized()?;
    let (params, fit) = est.penalty.fit(&x1, &x2, &est.fit)?;
    let t1 = eval_truth_correlation(&fit.directions[0].view(), &inst.truth.vectors[0])?;
    let t2 = eval_truth_correlation(&fit.directions[1].view(), &inst.truth.vectors[1])?;
    let w1 = eval_within_orthogonality(&x1.view(), &fit.directions[0].view())?;
    let w2 = eval_within_orthogonality(&x2.view(), &fit.directions[1].view())?;
    Ok(CellMetrics {
        truth_corr: [(t1[0] + t2[0]) / 2.0, (t1[1] + t2[1]) / 2.0],
        within_corr: (w1 + w2) / 2.0,
        params,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sigma_index: usize,
    pub rep: usize,
    pub sigma: f64,
    pub sigma_ratio: Option<f64>,
    pub truth_corr_1: Option<f64>,
    pub truth_corr_2: Option<f64>,
    pub within_corr: Option<f64>,
    /// Error category of a failed cell.
    pub error: Option<String>,
}

/// Running medians over rows sorted by `sigma_ratio`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MedianRow {
    pub sigma_ratio: f64,
    pub truth_corr_1: Option<f64>,
    pub truth_corr_2: Option<f64>,
    pub within_corr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub medians: Vec<MedianRow>,
}

pub const MEDIAN_WINDOW: usize = 9;

/// Generates, fits and scores every `(σ, rep)` cell. Replicate `r` uses the
/// seed `derive_seed(base.seed, [r])` at every `σ`, so the grid points differ
/// only in the noise level. Medians use a centered window of `window` rows.
pub fn sweep_sigma(
    base: &SimConfig,
    sigma_grid: &[f64],
    reps: usize,
    est: &SweepEstimator,
    window: usize,
) -> Result<SweepTable> {
    if sigma_grid.is_empty() || reps == 0 || window == 0 {
        return Err(Error::Config("sweep needs a non-empty sigma grid, reps >= 1 and window >= 1".into()));
    }
    let cells: Vec<(usize, usize)> = (0..sigma_grid.len())
        .flat_map(|i| (0..reps).map(move |r| (i, r)))
        .collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(i, r)| {
            let cfg = SimConfig {
                sigma: sigma_grid[i],
                seed: derive_seed(base.seed, &[r as u64]),
                ..base.clone()
            };
            let mut row = SweepRow {
                sigma_index: i,
                rep: r,
                sigma: sigma_grid[i],
                sigma_ratio: None,
                truth_corr_1: None,
                truth_corr_2: None,
                within_corr: None,
                error: None,
            };
            match generate_views(&cfg) {
                Ok(inst) => {
                    row.sigma_ratio = Some(inst.sigma_ratio);
                    match fit_and_score(&inst, est) {
                        Ok(m) => {
                            row.truth_corr_1 = Some(m.truth_corr[0]);
                            row.truth_corr_2 = Some(m.truth_corr[1]);
                            row.within_corr = Some(m.within_corr);
                        }
                        Err(e) => row.error = Some(e.category().to_string()),
                    }
                }
                Err(e) => row.error = Some(e.category().to_string()),
            }
            row
        })
        .collect();
    let mut sorted: Vec<&SweepRow> = rows.iter().filter(|r| r.sigma_ratio.is_some()).collect();
    sorted.sort_by(|a, b| a.sigma_ratio.unwrap().total_cmp(&b.sigma_ratio.unwrap()));
    let col = |f: fn(&SweepRow) -> Option<f64>| running_median(&sorted.iter().map(|r| f(r)).collect::<Vec<_>>(), window);
    let (m1, m2, mw) = (col(|r| r.truth_corr_1), col(|r| r.truth_corr_2), col(|r| r.within_corr));
    let medians = sorted
        .iter()
        .enumerate()
        .map(|(k, r)| MedianRow {
            sigma_ratio: r.sigma_ratio.unwrap(),
            truth_corr_1: m1[k],
            truth_corr_2: m2[k],
            within_corr: mw[k],
        })
        .collect();
    Ok(SweepTable { rows, medians })
}

/// Two standardized views of `n` samples and `p` features. View `i` has a
/// latent factor `f_i`, with `corr(f_1, f_2) = rho`; its first `active`
/// features are `f_i` plus noise of standard deviation `PLANTED_NOISE`, and
/// all other features are independent standard normals.
pub fn planted_factor_views(n: usize, p: usize, active: usize, rho: f64, seed: u64) -> Result<(ViewMatrix, ViewMatrix)> {
    if active > p || !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Config("need active <= p and a factor correlation in [-1, 1]".into()));
    }
    let mut rng = rng_from_seed(seed);
    let f1 = gaussian_matrix(n, 1, &mut rng).column(0).to_owned();
    let g = gaussian_matrix(n, 1, &mut rng).column(0).to_owned();
    let f2 = &f1 * rho + &g * (1.0 - rho * rho).sqrt();
    let mut views = Vec::with_capacity(2);
    for f in [&f1, &f2] {
        let mut x = gaussian_matrix(n, p, &mut rng);
        for k in 0..active {
            let mut col = x.column_mut(k);
            col *= PLANTED_NOISE;
            col += f;
        }
        views.push(ViewMatrix::raw(x, names(p))?.standardized()?);
    }
    let x2 = views.pop().unwrap();
    let x1 = views.pop().unwrap();
    Ok((x1, x2))
}

pub const PLANTED_NOISE: f64 = 0.5;

/// Two independent standard normal views, standardized.
pub fn noise_views(n: usize, p: usize, seed: u64) -> Result<(ViewMatrix, ViewMatrix)> {
    planted_factor_views(n, p, 0, 0.0, seed)
}
