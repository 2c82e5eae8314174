//! Problem and result types, plus the objective evaluators used for
//! convergence monitoring and diagnostics.
//!
//! # Projection convention
//!
//! For a cross-covariance `C12 ∈ ℝ^{p1×p2}` the vector `c_i` is the `i`-th
//! **column** of `C12`, seen as a `p1`-vector, for `i = 1..p2`. All hinge
//! programs are driven by the `p2 × d` matrix of projections
//! `A = C12ᵀ·Z1`, whose entry `(i, j)` is `c_iᵀ z_{1j}`. Every module goes
//! through [`projections`] so the convention lives in exactly one place.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// One observed view: `n` samples by `p` features.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMatrix {
    pub data: Matrix,
    pub feature_names: Vec<String>,
    pub standardized: bool,
    pub constant_columns: Vec<usize>,
}

impl ViewMatrix {
    /// Wraps data as-is, without standardizing.
    pub fn raw(data: Matrix, feature_names: Vec<String>) -> Result<Self> {
        if feature_names.len() != data.ncols() {
            return Err(Error::Dimension(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                data.ncols()
            )));
        }
        Ok(ViewMatrix {
            data,
            feature_names,
            standardized: false,
            constant_columns: Vec::new(),
        })
    }

    /// Standardized copy that keeps the feature names.
    pub fn standardized(&self) -> Result<Self> {
        let mut out = crate::linalg::standardize(&self.data.view())?;
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }
}

/// Distinct positive weights `μ_1 > … > μ_d > 0` forming `N = diag(μ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralWeights(Vec<f64>);

impl SpectralWeights {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::Config("spectral weights must be non-empty".into()));
        }
        if mu.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::Config(format!("spectral weights must be positive, got {mu:?}")));
        }
        if mu.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Config(format!(
                "spectral weights must be strictly decreasing, got {mu:?}"
            )));
        }
        Ok(SpectralWeights(mu))
    }

    /// `μ_j = 1 − (j − 1)/(2d)`.
    pub fn default_for(d: usize) -> Self {
        let mu = (0..d).map(|j| 1.0 - j as f64 / (2.0 * d as f64)).collect();
        SpectralWeights(mu)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }
}

fn check_nonneg(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::Config(format!("{name} must be finite and nonnegative, got {v:?}")));
    }
    Ok(())
}

/// Per-direction penalties for a two-view problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsityParams {
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
}

impl SparsityParams {
    pub fn new(gamma1: Vec<f64>, gamma2: Vec<f64>) -> Result<Self> {
        check_nonneg("gamma1", &gamma1)?;
        check_nonneg("gamma2", &gamma2)?;
        if gamma1.len() != gamma2.len() {
            return Err(Error::Config(format!(
                "gamma1 has {} entries, gamma2 has {}",
                gamma1.len(),
                gamma2.len()
            )));
        }
        Ok(SparsityParams { gamma1, gamma2 })
    }

    pub fn uniform(d: usize, gamma1: f64, gamma2: f64) -> Result<Self> {
        Self::new(vec![gamma1; d], vec![gamma2; d])
    }

    pub fn d(&self) -> usize {
        self.gamma1.len()
    }
}

/// Per-direction `m × m` penalty matrices; entry `(s, r)` of matrix `j`
/// penalizes direction `j` of view `s` in relation to view `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewSparsityParams {
    pub per_direction: Vec<Matrix>,
}

impl MultiViewSparsityParams {
    pub fn new(per_direction: Vec<Matrix>) -> Result<Self> {
        let Some(first) = per_direction.first() else {
            return Err(Error::Config("need at least one direction".into()));
        };
        let m = first.nrows();
        for (j, g) in per_direction.iter().enumerate() {
            if g.dim() != (m, m) {
                return Err(Error::Config(format!("penalty matrix {j} is not {m}x{m}")));
            }
            if g.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(format!("penalty matrix {j} has negative entries")));
            }
            if g.diag().iter().any(|v| *v != 0.0) {
                return Err(Error::Config(format!("penalty matrix {j} has a nonzero diagonal")));
            }
        }
        Ok(MultiViewSparsityParams { per_direction })
    }

    /// Same penalty `gamma[j]` for every ordered pair of distinct views.
    pub fn uniform(m: usize, gamma: &[f64]) -> Result<Self> {
        let mats = gamma
            .iter()
            .map(|&g| Array2::from_shape_fn((m, m), |(s, r)| if s == r { 0.0 } else { g }))
            .collect();
        Self::new(mats)
    }

    /// Embeds two-view penalties: `γ_{21j} = gamma2_j`, `γ_{12j} = gamma1_j`.
    pub fn from_two_view(params: &SparsityParams) -> Self {
        let mats = params
            .gamma1
            .iter()
            .zip(&params.gamma2)
            .map(|(&g1, &g2)| ndarray::array![[0.0, g1], [g2, 0.0]])
            .collect();
        MultiViewSparsityParams { per_direction: mats }
    }

    pub fn views(&self) -> usize {
        self.per_direction[0].nrows()
    }

    pub fn d(&self) -> usize {
        self.per_direction.len()
    }

    /// Aggregate threshold `Σ_{r≠s} γ_{srj}` for target view `s`.
    pub fn threshold(&self, s: usize, j: usize) -> f64 {
        self.per_direction[j].row(s).sum()
    }
}

/// Accessory variables steering the directions, with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedConfig {
    /// `n × d`, columns normalized to unit Euclidean length.
    pub y: Matrix,
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
}

impl DirectedConfig {
    /// Normalizes the columns of `y`; a zero column is rejected.
    pub fn new(mut y: Matrix, eps1: Vec<f64>, eps2: Vec<f64>) -> Result<Self> {
        check_nonneg("eps1", &eps1)?;
        check_nonneg("eps2", &eps2)?;
        let d = y.ncols();
        if eps1.len() != d || eps2.len() != d {
            return Err(Error::Config(format!(
                "accessory matrix has {d} columns but eps vectors have {} and {} entries",
                eps1.len(),
                eps2.len()
            )));
        }
        for (j, mut col) in y.axis_iter_mut(Axis(1)).enumerate() {
            let norm = col.dot(&col).sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::Config(format!("accessory column {j} has zero norm")));
            }
            col.mapv_inplace(|v| v / norm);
        }
        Ok(DirectedConfig { y, eps1, eps2 })
    }

    pub fn d(&self) -> usize {
        self.y.ncols()
    }
}

/// Binary `p × d` mask of active loadings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    mask: Array2<bool>,
}

impl SparsityPattern {
    pub fn new(mask: Array2<bool>) -> Self {
        SparsityPattern { mask }
    }

    pub fn all_active(p: usize, d: usize) -> Self {
        SparsityPattern {
            mask: Array2::from_elem((p, d), true),
        }
    }

    pub fn from_binary(values: &ArrayView2<f64>) -> Result<Self> {
        let mut mask = Array2::from_elem(values.dim(), false);
        for ((i, j), v) in values.indexed_iter() {
            mask[[i, j]] = match *v {
                0.0 => false,
                1.0 => true,
                x => {
                    return Err(Error::Parse {
                        row: i + 1,
                        column: j + 1,
                        detail: format!("mask entry {x} is not 0 or 1"),
                    })
                }
            };
        }
        Ok(SparsityPattern { mask })
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn dim(&self) -> (usize, usize) {
        self.mask.dim()
    }

    pub fn is_active(&self, i: usize, j: usize) -> bool {
        self.mask[[i, j]]
    }

    /// Strictly increasing active row indices of column `j`.
    pub fn active_indices(&self, j: usize) -> Vec<usize> {
        self.mask
            .column(j)
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect()
    }

    pub fn active_counts(&self) -> Vec<usize> {
        self.mask
            .axis_iter(Axis(1))
            .map(|c| c.iter().filter(|&&a| a).count())
            .collect()
    }

    /// Fraction-free 0/1 matrix.
    pub fn to_f64(&self) -> Matrix {
        self.mask.mapv(|a| if a { 1.0 } else { 0.0 })
    }

    /// Zeroes the entries of `z` outside the mask (the Hadamard product `Z ∘ T`).
    pub fn apply(&self, z: &mut Matrix) {
        debug_assert_eq!(z.dim(), self.mask.dim());
        ndarray::Zip::from(z).and(&self.mask).for_each(|v, &a| {
            if !a {
                *v = 0.0;
            }
        });
    }

    /// Marks every entry of column `j` inactive.
    pub fn mask_column_off(&mut self, j: usize) {
        self.mask.column_mut(j).fill(false);
    }

    /// `true` when every nonzero of `z` sits on an active entry.
    pub fn contains_support_of(&self, z: &ArrayView2<f64>) -> bool {
        ndarray::Zip::from(z)
            .and(&self.mask)
            .all(|v, &a| a || *v == 0.0)
    }

    pub fn is_subset_of(&self, other: &SparsityPattern) -> bool {
        ndarray::Zip::from(&self.mask)
            .and(&other.mask)
            .all(|&a, &b| !a || b)
    }
}

/// Which surrogate program drives stage 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L0,
}

/// Why an iterative stage stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    MaxIterations,
}

/// Convergence record of one iterative run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTrace {
    pub label: String,
    /// Objective at the start and after every iteration.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
    /// `false` if the objective dropped by more than the monotonicity slack.
    pub monotone: bool,
}

impl StageTrace {
    pub fn final_objective(&self) -> f64 {
        *self.objective.last().unwrap_or(&f64::NAN)
    }
}

/// Slack allowed on successive objective values before a run is reported as non-monotone.
pub const MONOTONE_SLACK: f64 = 1e-10;

/// Pearson correlations for a pair of views, one slot per direction;
/// `None` marks a constant canonical covariate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCorrelations {
    pub views: (usize, usize),
    pub values: Vec<Option<f64>>,
}

/// Everything a fit produces.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub patterns: Vec<SparsityPattern>,
    pub directions: Vec<Matrix>,
    /// Correlations of the first pair of views (views 1 and 2).
    pub canonical_correlations: Vec<Option<f64>>,
    /// All view pairs `r < s`; a single entry for two views.
    pub pairwise_correlations: Vec<PairCorrelations>,
    pub stage1: Vec<StageTrace>,
    pub stage2: Option<StageTrace>,
    pub dead_directions: Vec<usize>,
    /// `‖ZᵀZ − I‖_max` per view after refinement.
    pub orthonormality_deviation: Vec<f64>,
}

impl FitResult {
    pub fn converged(&self) -> bool {
        self.stage1.iter().all(|t| t.converged) && self.stage2.as_ref().is_none_or(|t| t.converged)
    }
}

/// Sample cross-covariances `C_rs = (1/n)·X_rᵀ·X_s` for every pair of views.
/// Only `r < s` is stored; `C_sr` is served as a transposed view.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    dims: Vec<usize>,
    blocks: std::collections::BTreeMap<(usize, usize), Matrix>,
}

impl CovarianceSet {
    pub fn from_views(views: &[ArrayView2<f64>]) -> Result<Self> {
        if views.len() < 2 {
            return Err(Error::Config(format!("need at least 2 views, got {}", views.len())));
        }
        let mut blocks = std::collections::BTreeMap::new();
        for r in 0..views.len() {
            for s in r + 1..views.len() {
                blocks.insert((r, s), crate::linalg::cross_covariance(&views[r], &views[s])?);
            }
        }
        Ok(CovarianceSet {
            dims: views.iter().map(|v| v.ncols()).collect(),
            blocks,
        })
    }

    /// Two views given directly by `C12`.
    pub fn two_view(c12: Matrix) -> Self {
        let dims = vec![c12.nrows(), c12.ncols()];
        let mut blocks = std::collections::BTreeMap::new();
        blocks.insert((0, 1), c12);
        CovarianceSet { dims, blocks }
    }

    /// Builds from explicit upper-triangle blocks `(r, s, C_rs)` with `r < s`.
    pub fn from_blocks(dims: Vec<usize>, blocks: Vec<(usize, usize, Matrix)>) -> Result<Self> {
        let m = dims.len();
        if m < 2 {
            return Err(Error::Config("need at least 2 views".into()));
        }
        let mut map = std::collections::BTreeMap::new();
        for (r, s, c) in blocks {
            if r >= s || s >= m {
                return Err(Error::Config(format!("block ({r}, {s}) is not an upper-triangle pair")));
            }
            if c.dim() != (dims[r], dims[s]) {
                return Err(Error::Dimension(format!(
                    "block ({r}, {s}) is {:?}, expected {}x{}",
                    c.dim(),
                    dims[r],
                    dims[s]
                )));
            }
            map.insert((r, s), c);
        }
        if map.len() != m * (m - 1) / 2 {
            return Err(Error::Config("every pair of views needs a covariance block".into()));
        }
        Ok(CovarianceSet { dims, blocks: map })
    }

    pub fn views(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self, r: usize) -> usize {
        self.dims[r]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// `C_rs` (`p_r × p_s`) for `r ≠ s`.
    pub fn get(&self, r: usize, s: usize) -> ArrayView2<'_, f64> {
        assert_ne!(r, s, "no covariance block for a view with itself");
        if r < s {
            self.blocks[&(r, s)].view()
        } else {
            self.blocks[&(s, r)].t()
        }
    }
}

/// `A = C12ᵀ·Z1`; entry `(i, j)` is `c_iᵀ z_{1j}` with `c_i` the `i`-th column of `C12`.
pub fn projections(c12: &ArrayView2<f64>, z1: &ArrayView2<f64>) -> Result<Matrix> {
    if c12.nrows() != z1.nrows() {
        return Err(Error::Dimension(format!(
            "covariance has {} rows but direction block has {}",
            c12.nrows(),
            z1.nrows()
        )));
    }
    Ok(c12.t().dot(z1))
}

fn check_direction_count(what: &str, len: usize, d: usize) -> Result<()> {
    if len != d {
        return Err(Error::Dimension(format!("{what} has {len} entries for {d} directions")));
    }
    Ok(())
}

/// Surrogate value of a projection matrix: `Σ_j Σ_i [μ_j|a_ij| − γ_j]₊²` for
/// L1 and `Σ_j Σ_i [(μ_j a_ij)² − γ_j]₊` for L0.
pub(crate) fn surrogate_from_projections(
    a: &ArrayView2<f64>,
    gamma: &[f64],
    mu: &SpectralWeights,
    penalty: Penalty,
) -> f64 {
    let mut total = 0.0;
    for (j, col) in a.axis_iter(Axis(1)).enumerate() {
        let (m, g) = (mu.get(j), gamma[j]);
        for &v in col.iter() {
            total += match penalty {
                Penalty::L1 => {
                    let h = (m * v.abs() - g).max(0.0);
                    h * h
                }
                Penalty::L0 => ((m * v).powi(2) - g).max(0.0),
            };
        }
    }
    total
}

/// `tr(Z1ᵀ·C12·Z2·N)`.
pub fn objective_trace_block(
    c12: &ArrayView2<f64>,
    z1: &ArrayView2<f64>,
    z2: &ArrayView2<f64>,
    mu: &SpectralWeights,
) -> Result<f64> {
    let (p1, p2) = c12.dim();
    let d = mu.len();
    if z1.dim() != (p1, d) || z2.dim() != (p2, d) {
        return Err(Error::Dimension(format!(
            "trace objective: C12 is {p1}x{p2}, Z1 is {:?}, Z2 is {:?}, d = {d}",
            z1.dim(),
            z2.dim()
        )));
    }
    let cz2 = c12.dot(z2);
    Ok((0..d).map(|j| mu.get(j) * z1.column(j).dot(&cz2.column(j))).sum())
}

/// L1 surrogate `Σ_j Σ_i [μ_j|c_iᵀz_{1j}| − γ_{2j}]₊²`.
pub fn objective_l1_surrogate(
    c12: &ArrayView2<f64>,
    z1: &ArrayView2<f64>,
    gamma2: &[f64],
    mu: &SpectralWeights,
) -> Result<f64> {
    check_direction_count("gamma2", gamma2.len(), mu.len())?;
    check_direction_count("Z1 columns", z1.ncols(), mu.len())?;
    let a = projections(c12, z1)?;
    Ok(surrogate_from_projections(&a.view(), gamma2, mu, Penalty::L1))
}

/// L0 surrogate `Σ_j Σ_i [(μ_j c_iᵀz_{1j})² − γ_{2j}]₊`.
pub fn objective_l0_surrogate(
    c12: &ArrayView2<f64>,
    z1: &ArrayView2<f64>,
    gamma2: &[f64],
    mu: &SpectralWeights,
) -> Result<f64> {
    check_direction_count("gamma2", gamma2.len(), mu.len())?;
    check_direction_count("Z1 columns", z1.ncols(), mu.len())?;
    let a = projections(c12, z1)?;
    Ok(surrogate_from_projections(&a.view(), gamma2, mu, Penalty::L0))
}

/// Pearson correlation; `None` when either vector is constant.
pub fn pearson(a: &ArrayView1<f64>, b: &ArrayView1<f64>) -> Option<f64> {
    let n = a.len();
    if n != b.len() || n < 2 {
        return None;
    }
    let ma = a.sum() / n as f64;
    let mb = b.sum() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let scale_a = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let scale_b = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    // a vector that is constant up to rounding has no defined correlation
    if saa.sqrt() <= 1e-13 * scale_a * (n as f64).sqrt() || sbb.sqrt() <= 1e-13 * scale_b * (n as f64).sqrt() {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Canonical covariates `X·Z`.
pub fn covariates(x: &ArrayView2<f64>, z: &ArrayView2<f64>) -> Result<Matrix> {
    if x.ncols() != z.nrows() {
        return Err(Error::Dimension(format!(
            "view has {} features, directions have {} rows",
            x.ncols(),
            z.nrows()
        )));
    }
    Ok(x.dot(z))
}

/// Per-direction correlations, with `None` for constant covariates.
pub fn canonical_correlations_partial(
    x1: &ViewMatrix,
    x2: &ViewMatrix,
    z1: &ArrayView2<f64>,
    z2: &ArrayView2<f64>,
) -> Result<Vec<Option<f64>>> {
    if x1.n() != x2.n() {
        return Err(Error::Dimension(format!("views have {} and {} samples", x1.n(), x2.n())));
    }
    if z1.ncols() != z2.ncols() {
        return Err(Error::Dimension("direction blocks have different widths".into()));
    }
    let u1 = covariates(&x1.view(), z1)?;
    let u2 = covariates(&x2.view(), z2)?;
    Ok((0..z1.ncols())
        .map(|j| pearson(&u1.column(j), &u2.column(j)))
        .collect())
}

/// Pearson correlation of `X1·z_{1j}` with `X2·z_{2j}` for every direction.
pub fn canonical_correlations(
    x1: &ViewMatrix,
    x2: &ViewMatrix,
    z1: &ArrayView2<f64>,
    z2: &ArrayView2<f64>,
) -> Result<Vec<f64>> {
    canonical_correlations_partial(x1, x2, z1, z2)?
        .into_iter()
        .enumerate()
        .map(|(j, r)| r.ok_or(Error::DegenerateCovariate { direction: j }))
        .collect()
}
