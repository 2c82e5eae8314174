//! Both stages chained for each problem variant.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{orthonormality_deviation, Matrix};
use crate::model::{
    canonical_correlations_partial, CovarianceSet, DirectedConfig, FitResult,
    MultiViewSparsityParams, PairCorrelations, Penalty, SparsityParams, SpectralWeights,
    ViewMatrix,
};
use crate::pattern::{self, estimate_patterns, InitStrategy, PatternEstimate, PatternProblem};
use crate::refine::{self, refine, RefineInit, RefineProblem};

/// Settings shared by every fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitConfig {
    pub d: usize,
    pub penalty: Penalty,
    /// `None` selects `μ_j = 1 − (j−1)/(2d)`.
    pub mu: Option<Vec<f64>>,
    pub seed: u64,
    pub restarts: usize,
    pub init: InitStrategy,
    pub stage1_tol: f64,
    pub stage1_max_iters: usize,
    pub stage2_tol: f64,
    pub stage2_max_iters: usize,
    /// Start stage 2 from random points instead of the stage-1 blocks.
    pub cold_start: bool,
    /// Run stage 2 after L0 patterns (off by default: the L0 patterns are the result).
    pub refine_l0: bool,
    /// Order in which views are processed; `None` keeps each variant's default.
    pub order: Option<Vec<usize>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            d: 1,
            penalty: Penalty::L1,
            mu: None,
            seed: 0,
            restarts: 1,
            init: InitStrategy::Spectral,
            stage1_tol: pattern::DEFAULT_TOL,
            stage1_max_iters: pattern::DEFAULT_MAX_ITERS,
            stage2_tol: refine::DEFAULT_TOL,
            stage2_max_iters: refine::DEFAULT_MAX_ITERS,
            cold_start: false,
            refine_l0: false,
            order: None,
        }
    }
}

impl FitConfig {
    pub fn with_d(d: usize) -> Self {
        FitConfig {
            d,
            ..Self::default()
        }
    }

    pub fn weights(&self) -> Result<SpectralWeights> {
        let w = match &self.mu {
            Some(mu) => SpectralWeights::new(mu.clone())?,
            None => SpectralWeights::default_for(self.d),
        };
        if w.len() != self.d || self.d == 0 {
            return Err(Error::Config(format!(
                "{} spectral weights for d = {}",
                w.len(),
                self.d
            )));
        }
        Ok(w)
    }

    fn configure(&self, mut p: PatternProblem) -> PatternProblem {
        if let Some(order) = &self.order {
            p = p.with_order(order.clone());
        }
        p.with_seed(self.seed)
            .with_init(self.init)
            .with_restarts(self.restarts)
            .with_tol(self.stage1_tol)
            .with_max_iters(self.stage1_max_iters)
    }

    fn refine_problem(&self, mut p: RefineProblem, est: &PatternEstimate) -> RefineProblem {
        if let Some(order) = &self.order {
            p = p.with_order(order.clone());
        }
        let init = if self.cold_start {
            RefineInit::Cold {
                seed: crate::linalg::derive_seed(self.seed, &[u64::MAX]),
            }
        } else {
            RefineInit::Warm(est.directions.clone())
        };
        p.with_init(init)
            .with_tol(self.stage2_tol)
            .with_max_iters(self.stage2_max_iters)
    }
}

fn check_views(views: &[&ViewMatrix]) -> Result<()> {
    let n = views[0].n();
    if let Some(v) = views.iter().find(|v| v.n() != n) {
        return Err(Error::Dimension(format!("views have {n} and {} samples", v.n())));
    }
    Ok(())
}

fn assemble(
    views: &[&ViewMatrix],
    est: PatternEstimate,
    refined: Option<refine::RefineResult>,
) -> Result<FitResult> {
    let mut dead = est.dead_directions.clone();
    let (directions, stage2) = match refined {
        Some(r) => {
            dead.extend(r.dead_directions.iter().copied());
            (r.directions, Some(r.trace))
        }
        None => (est.directions, None),
    };
    dead.sort_unstable();
    dead.dedup();
    let mut pairwise = Vec::new();
    for r in 0..views.len() {
        for s in r + 1..views.len() {
            let mut values =
                canonical_correlations_partial(views[r], views[s], &directions[r].view(), &directions[s].view())?;
            for &j in &dead {
                values[j] = None;
            }
            pairwise.push(PairCorrelations { views: (r, s), values });
        }
    }
    Ok(FitResult {
        patterns: est.patterns,
        canonical_correlations: pairwise[0].values.clone(),
        pairwise_correlations: pairwise,
        orthonormality_deviation: directions.iter().map(|z| orthonormality_deviation(&z.view())).collect(),
        directions,
        stage1: est.traces,
        stage2,
        dead_directions: dead,
    })
}

fn wants_refinement(config: &FitConfig) -> bool {
    config.penalty == Penalty::L1 || config.refine_l0
}

/// Two-view fit from the views' cross-covariance.
pub fn fit_two_view(
    x1: &ViewMatrix,
    x2: &ViewMatrix,
    params: &SparsityParams,
    config: &FitConfig,
) -> Result<FitResult> {
    check_views(&[x1, x2])?;
    let c12 = crate::linalg::cross_covariance(&x1.view(), &x2.view())?;
    let (est, refined) = two_view_stages(c12, params, config)?;
    assemble(&[x1, x2], est, refined)
}

/// Both stages on a given `C12`, without any sample-level post-processing.
pub fn two_view_stages(
    c12: Matrix,
    params: &SparsityParams,
    config: &FitConfig,
) -> Result<(PatternEstimate, Option<refine::RefineResult>)> {
    let weights = config.weights()?;
    check_params(params.d(), config.d)?;
    let problem = config.configure(PatternProblem::two_view(c12.clone(), params, weights.clone(), config.penalty));
    let est = estimate_patterns(&problem)?;
    let refined = if wants_refinement(config) {
        let rp = RefineProblem::two_view(c12, est.patterns[0].clone(), est.patterns[1].clone(), weights);
        Some(refine(&config.refine_problem(rp, &est))?)
    } else {
        None
    };
    Ok((est, refined))
}

fn check_params(params_d: usize, d: usize) -> Result<()> {
    if params_d != d {
        return Err(Error::Config(format!("penalties given for {params_d} directions, d = {d}")));
    }
    Ok(())
}

/// Multi-view fit; views are estimated in ascending order unless `config.order` says otherwise.
pub fn fit_multi_view(
    views: &[ViewMatrix],
    params: &MultiViewSparsityParams,
    config: &FitConfig,
) -> Result<FitResult> {
    if views.len() < 2 {
        return Err(Error::Config(format!("need at least 2 views, got {}", views.len())));
    }
    if config.penalty != Penalty::L1 {
        return Err(Error::Config("the multi-view problem supports the l1 penalty only".into()));
    }
    let refs: Vec<&ViewMatrix> = views.iter().collect();
    check_views(&refs)?;
    check_params(params.d(), config.d)?;
    let weights = config.weights()?;
    let arrays: Vec<_> = views.iter().map(|v| v.view()).collect();
    let cov = CovarianceSet::from_views(&arrays)?;
    let problem = config.configure(PatternProblem::multi_view(cov.clone(), params.clone(), weights.clone()));
    let est = estimate_patterns(&problem)?;
    let rp = RefineProblem::multi_view(cov, est.patterns.clone(), weights);
    let refined = refine(&config.refine_problem(rp, &est))?;
    assemble(&refs, est, Some(refined))
}

/// Two-view fit steered toward the accessory variables in `directed`.
pub fn fit_directed(
    x1: &ViewMatrix,
    x2: &ViewMatrix,
    directed: &DirectedConfig,
    params: &SparsityParams,
    config: &FitConfig,
) -> Result<FitResult> {
    if config.penalty != Penalty::L1 {
        return Err(Error::Config("the directed problem supports the l1 penalty only".into()));
    }
    check_views(&[x1, x2])?;
    check_params(params.d(), config.d)?;
    if directed.d() != config.d {
        return Err(Error::Config(format!(
            "accessory matrix has {} columns, d = {}",
            directed.d(),
            config.d
        )));
    }
    let weights = config.weights()?;
    let problem = config.configure(PatternProblem::directed(
        &x1.view(),
        &x2.view(),
        directed,
        params,
        weights.clone(),
    )?);
    let est = estimate_patterns(&problem)?;
    let rp = RefineProblem::directed(
        &x1.view(),
        &x2.view(),
        directed,
        est.patterns[0].clone(),
        est.patterns[1].clone(),
        weights,
    )?;
    let refined = refine(&config.refine_problem(rp, &est))?;
    assemble(&[x1, x2], est, Some(refined))
}
