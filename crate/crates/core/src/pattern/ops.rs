//! Single sweeps, support rules and covariance shrinking, exposed one
//! operation at a time.

use std::collections::BTreeSet;

use ndarray::{ArrayView2, Axis};

use super::kernel::SubProblem;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{
    CovarianceSet, DirectedConfig, MultiViewSparsityParams, Penalty, SparsityPattern,
    SpectralWeights,
};

fn check_block(what: &str, z: &ArrayView2<f64>, p: usize, d: usize) -> Result<()> {
    if z.dim() != (p, d) {
        return Err(Error::Dimension(format!("{what} is {:?}, expected {p}x{d}", z.dim())));
    }
    Ok(())
}

fn check_gamma(gamma: &[f64], d: usize) -> Result<()> {
    if gamma.len() != d {
        return Err(Error::Dimension(format!("{} penalties for {d} directions", gamma.len())));
    }
    if gamma.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::Config(format!("penalties must be nonnegative, got {gamma:?}")));
    }
    Ok(())
}

fn check_mask(mask: Option<&SparsityPattern>, p: usize, d: usize) -> Result<()> {
    match mask {
        Some(t) if t.dim() != (p, d) => Err(Error::Dimension(format!(
            "mask is {:?}, expected {p}x{d}",
            t.dim()
        ))),
        _ => Ok(()),
    }
}

fn dead_error(dead: BTreeSet<usize>) -> Result<()> {
    if dead.is_empty() {
        Ok(())
    } else {
        Err(Error::DeadGradient {
            directions: dead.into_iter().collect(),
        })
    }
}

/// `X_iᵀ·Y·E` with `E = diag(eps)`.
pub(crate) fn accessory_term(x: &ArrayView2<f64>, y: &ArrayView2<f64>, eps: &[f64]) -> Result<Matrix> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "view has {} samples, accessory matrix has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let mut t = x.t().dot(y);
    for (j, mut col) in t.axis_iter_mut(Axis(1)).enumerate() {
        col *= eps[j];
    }
    Ok(t)
}

/// `None` for an all-zero term, so a vanishing accessory weight reproduces
/// the undirected computation bit for bit.
pub(crate) fn nonzero_view(m: &Matrix) -> Option<ArrayView2<'_, f64>> {
    m.iter().any(|v| *v != 0.0).then(|| m.view())
}

#[allow(clippy::too_many_arguments)]
fn two_view_sweep(
    c12: &ArrayView2<f64>,
    z1: &ArrayView2<f64>,
    gamma2: &[f64],
    mu: &SpectralWeights,
    mask1: Option<&SparsityPattern>,
    penalty: Penalty,
    offset: Option<ArrayView2<f64>>,
    linear: Option<ArrayView2<f64>>,
) -> Result<Matrix> {
    let (p1, _) = c12.dim();
    let d = mu.len();
    check_block("Z1", z1, p1, d)?;
    check_gamma(gamma2, d)?;
    check_mask(mask1, p1, d)?;
    let cov = CovarianceSet::two_view(c12.to_owned());
    let sub = SubProblem {
        cov: &cov,
        target: 1,
        vars: vec![0],
        masks: vec![mask1],
        linear: vec![linear],
        offset,
        thresholds: gamma2.to_vec(),
        mu,
        penalty,
    };
    let mut z = vec![z1.to_owned()];
    let mut dead = BTreeSet::new();
    sub.update(&mut z, 0, &mut dead)?;
    dead_error(dead)?;
    Ok(z.pop().unwrap())
}

/// One L1 sweep: `G = C12·W` with `W_ij = μ_j[μ_j|c_iᵀz_{1j}| − γ_{2j}]₊·sgn(c_iᵀz_{1j})`,
/// then `polar(G ∘ T1) ∘ T1` (or plain `polar(G)` without a mask).
pub fn sweep_l1(
    c12: &ArrayView2<f64>,
    z1: &ArrayView2<f64>,
    gamma2: &[f64],
    mu: &SpectralWeights,
    mask1: Option<&SparsityPattern>,
) -> Result<Matrix> {
    two_view_sweep(c12, z1, gamma2, mu, mask1, Penalty::L1, None, None)
}

/// One L0 sweep, with `W_ij = μ_j²·1{(μ_j c_iᵀz_{1j})² > γ_{2j}}·c_iᵀz_{1j}`.
pub fn sweep_l0(
    c12: &ArrayView2<f64>,
    z1: &ArrayView2<f64>,
    gamma2: &[f64],
    mu: &SpectralWeights,
    mask1: Option<&SparsityPattern>,
) -> Result<Matrix> {
    two_view_sweep(c12, z1, gamma2, mu, mask1, Penalty::L0, None, None)
}

/// One accessory-directed sweep: the hinge acts on `c_iᵀz_{1j} + ε_{2j}x_{2i}ᵀy_j`
/// and `ε_{1j}·X1ᵀy_j` is added to the gradient.
#[allow(clippy::too_many_arguments)]
pub fn sweep_directed(
    c12: &ArrayView2<f64>,
    x1: &ArrayView2<f64>,
    x2: &ArrayView2<f64>,
    config: &DirectedConfig,
    z1: &ArrayView2<f64>,
    gamma2: &[f64],
    mu: &SpectralWeights,
    mask1: Option<&SparsityPattern>,
) -> Result<Matrix> {
    let (p1, p2) = c12.dim();
    check_directed(config, mu, x1, x2, p1, p2)?;
    let lin = accessory_term(x1, &config.y.view(), &config.eps1)?;
    let off = accessory_term(x2, &config.y.view(), &config.eps2)?;
    two_view_sweep(c12, z1, gamma2, mu, mask1, Penalty::L1, nonzero_view(&off), nonzero_view(&lin))
}

fn check_directed(
    config: &DirectedConfig,
    mu: &SpectralWeights,
    x1: &ArrayView2<f64>,
    x2: &ArrayView2<f64>,
    p1: usize,
    p2: usize,
) -> Result<()> {
    if config.d() != mu.len() {
        return Err(Error::Dimension(format!(
            "accessory matrix has {} columns for {} directions",
            config.d(),
            mu.len()
        )));
    }
    if x1.ncols() != p1 || x2.ncols() != p2 {
        return Err(Error::Dimension("views do not match the covariance".into()));
    }
    Ok(())
}

fn multiview_sub<'a>(
    cov: &'a CovarianceSet,
    target: usize,
    gamma: &MultiViewSparsityParams,
    mu: &'a SpectralWeights,
    masks: &'a [Option<SparsityPattern>],
) -> Result<SubProblem<'a>> {
    let m = cov.views();
    let d = mu.len();
    if target >= m {
        return Err(Error::Config(format!("target view {target} out of range for {m} views")));
    }
    if gamma.views() != m || gamma.d() != d {
        return Err(Error::Dimension(format!(
            "penalties are for {} views and {} directions, problem has {m} and {d}",
            gamma.views(),
            gamma.d()
        )));
    }
    if masks.len() != m {
        return Err(Error::Dimension(format!("{} masks for {m} views", masks.len())));
    }
    let vars: Vec<usize> = (0..m).filter(|&r| r != target).collect();
    for &r in &vars {
        check_mask(masks[r].as_ref(), cov.dim(r), d)?;
    }
    Ok(SubProblem {
        cov,
        target,
        masks: vars.iter().map(|&r| masks[r].as_ref()).collect(),
        linear: vec![None; vars.len()],
        vars,
        offset: None,
        thresholds: (0..d).map(|j| gamma.threshold(target, j)).collect(),
        mu,
        penalty: Penalty::L1,
    })
}

/// One multi-view sweep for target view `target`: every other block is
/// updated in ascending view order. `z[target]` is returned unchanged.
pub fn sweep_multiview(
    cov: &CovarianceSet,
    z: &[Matrix],
    target: usize,
    gamma: &MultiViewSparsityParams,
    mu: &SpectralWeights,
    masks: &[Option<SparsityPattern>],
) -> Result<Vec<Matrix>> {
    let sub = multiview_sub(cov, target, gamma, mu, masks)?;
    if z.len() != cov.views() {
        return Err(Error::Dimension(format!("{} blocks for {} views", z.len(), cov.views())));
    }
    for &r in &sub.vars {
        check_block(&format!("Z{}", r + 1), &z[r].view(), cov.dim(r), mu.len())?;
    }
    let mut vars: Vec<Matrix> = sub.vars.iter().map(|&r| z[r].clone()).collect();
    let mut dead = BTreeSet::new();
    for k in 0..vars.len() {
        sub.update(&mut vars, k, &mut dead)?;
    }
    dead_error(dead)?;
    let mut out = z.to_vec();
    for (k, &r) in sub.vars.iter().enumerate() {
        out[r] = std::mem::take(&mut vars[k]);
    }
    Ok(out)
}

fn two_view_support(
    c12: &ArrayView2<f64>,
    z1: &ArrayView2<f64>,
    gamma2: &[f64],
    mu: &SpectralWeights,
    penalty: Penalty,
    offset: Option<ArrayView2<f64>>,
) -> Result<SparsityPattern> {
    let d = mu.len();
    check_block("Z1", z1, c12.nrows(), d)?;
    check_gamma(gamma2, d)?;
    let cov = CovarianceSet::two_view(c12.to_owned());
    let sub = SubProblem {
        cov: &cov,
        target: 1,
        vars: vec![0],
        masks: vec![None],
        linear: vec![None],
        offset,
        thresholds: gamma2.to_vec(),
        mu,
        penalty,
    };
    Ok(sub.support(&[z1.to_owned()], &BTreeSet::new()))
}

/// `T2[i][j] = 0` iff `|c_iᵀz_{1j}| ≤ γ_{2j}/μ_j`.
pub fn support_l1(
    c12: &ArrayView2<f64>,
    z1: &ArrayView2<f64>,
    gamma2: &[f64],
    mu: &SpectralWeights,
) -> Result<SparsityPattern> {
    two_view_support(c12, z1, gamma2, mu, Penalty::L1, None)
}

/// `T2[i][j] = 0` iff `(c_iᵀz_{1j})² ≤ γ_{2j}/μ_j²`.
pub fn support_l0(
    c12: &ArrayView2<f64>,
    z1: &ArrayView2<f64>,
    gamma2: &[f64],
    mu: &SpectralWeights,
) -> Result<SparsityPattern> {
    two_view_support(c12, z1, gamma2, mu, Penalty::L0, None)
}

/// `T_s[i][j] = 0` iff `|Σ_{r≠s} c̃_{rsi}ᵀz_{rj}| ≤ Σ_{r≠s} γ_{srj}/μ_j`.
pub fn support_multiview(
    cov: &CovarianceSet,
    z: &[Matrix],
    target: usize,
    gamma: &MultiViewSparsityParams,
    mu: &SpectralWeights,
) -> Result<SparsityPattern> {
    let masks = vec![None; cov.views()];
    let sub = multiview_sub(cov, target, gamma, mu, &masks)?;
    if z.len() != cov.views() {
        return Err(Error::Dimension(format!("{} blocks for {} views", z.len(), cov.views())));
    }
    let vars: Vec<Matrix> = sub.vars.iter().map(|&r| z[r].clone()).collect();
    for (k, &r) in sub.vars.iter().enumerate() {
        check_block(&format!("Z{}", r + 1), &vars[k].view(), cov.dim(r), mu.len())?;
    }
    Ok(sub.support(&vars, &BTreeSet::new()))
}

/// `T2[k][j] = 0` iff `|c_kᵀz_{1j} + ε_{2j}x_{2k}ᵀy_j| ≤ γ_{2j}/μ_j`.
pub fn support_directed(
    c12: &ArrayView2<f64>,
    x2: &ArrayView2<f64>,
    config: &DirectedConfig,
    z1: &ArrayView2<f64>,
    gamma2: &[f64],
    mu: &SpectralWeights,
) -> Result<SparsityPattern> {
    if config.d() != mu.len() || x2.ncols() != c12.ncols() {
        return Err(Error::Dimension("accessory inputs do not match the problem".into()));
    }
    let off = accessory_term(x2, &config.y.view(), &config.eps2)?;
    two_view_support(c12, z1, gamma2, mu, Penalty::L1, nonzero_view(&off))
}

/// Which index of the covariance a pattern restricts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Rows,
    Cols,
}

/// Keeps, on `side`, exactly the active indices of column `j` of `t`, in increasing order.
pub fn shrink_covariance(
    c: &ArrayView2<f64>,
    t: &SparsityPattern,
    j: usize,
    side: Side,
) -> Result<Matrix> {
    let (p, d) = t.dim();
    let axis = match side {
        Side::Rows => Axis(0),
        Side::Cols => Axis(1),
    };
    if c.len_of(axis) != p || j >= d {
        return Err(Error::Dimension(format!(
            "pattern is {p}x{d} but covariance is {:?} (direction {j})",
            c.dim()
        )));
    }
    let idx = t.active_indices(j);
    if idx.is_empty() {
        return Err(Error::EmptySupport { direction: j });
    }
    Ok(c.select(axis, &idx))
}
