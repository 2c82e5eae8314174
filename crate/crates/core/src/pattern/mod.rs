//! Stage 1: sparsity patterns from the hinge-squared surrogate programs.
//!
//! Once a view's pattern is fixed, later sub-problems only ever touch its
//! active entries (successive shrinking). This is computed as a masked
//! full-coordinate update, `polar(G ∘ T) ∘ T`, which for each direction
//! equals working with the covariance shrunk to that direction's support
//! (see [`shrink_covariance`]).

mod kernel;
mod ops;

use std::collections::BTreeSet;

use ndarray::ArrayView2;
use rayon::prelude::*;

pub use ops::{
    shrink_covariance, support_directed, support_l0, support_l1, support_multiview,
    sweep_directed, sweep_l0, sweep_l1, sweep_multiview, Side,
};

use crate::error::{Error, Result};
use crate::linalg::{derive_seed, leading_left_singular_vectors, random_stiefel, Matrix};
use crate::model::{
    CovarianceSet, DirectedConfig, MultiViewSparsityParams, Penalty, SparsityParams,
    SparsityPattern, SpectralWeights, StageTrace,
};
use kernel::{SubProblem, SubRun};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITERS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternVariant {
    L1TwoView,
    L0TwoView,
    MultiView,
    Directed,
}

/// How the variable blocks of each sub-problem are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    /// Seeded random Stiefel points.
    #[default]
    Random,
    /// Leading left singular vectors of the hinge covariance for the first
    /// restart, random points for the others.
    Spectral,
}

/// Everything stage 1 needs. Views are indexed from 0.
#[derive(Debug, Clone)]
pub struct PatternProblem {
    pub variant: PatternVariant,
    pub covariances: CovarianceSet,
    pub penalties: MultiViewSparsityParams,
    pub weights: SpectralWeights,
    /// Accessory terms `X_iᵀ·Y·E_i`, one per view (directed variant only).
    pub accessory: Option<Vec<Matrix>>,
    pub init_seed: u64,
    pub init: InitStrategy,
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    /// Order in which target views are estimated.
    pub order: Vec<usize>,
}

/// Patterns, last stage-1 blocks (masked by their own pattern) and diagnostics.
#[derive(Debug, Clone)]
pub struct PatternEstimate {
    pub patterns: Vec<SparsityPattern>,
    pub directions: Vec<Matrix>,
    pub traces: Vec<StageTrace>,
    pub dead_directions: Vec<usize>,
}

impl PatternEstimate {
    pub fn converged(&self) -> bool {
        self.traces.iter().all(|t| t.converged)
    }
}

impl PatternProblem {
    fn base(
        variant: PatternVariant,
        covariances: CovarianceSet,
        penalties: MultiViewSparsityParams,
        weights: SpectralWeights,
        order: Vec<usize>,
    ) -> Self {
        PatternProblem {
            variant,
            covariances,
            penalties,
            weights,
            accessory: None,
            init_seed: 0,
            init: InitStrategy::Random,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            restarts: 1,
            order,
        }
    }

    /// Two views from `C12`: `T2` is estimated first, then `T1` on the shrunk problem.
    pub fn two_view(
        c12: Matrix,
        params: &SparsityParams,
        weights: SpectralWeights,
        penalty: Penalty,
    ) -> Self {
        let variant = match penalty {
            Penalty::L1 => PatternVariant::L1TwoView,
            Penalty::L0 => PatternVariant::L0TwoView,
        };
        Self::base(
            variant,
            CovarianceSet::two_view(c12),
            MultiViewSparsityParams::from_two_view(params),
            weights,
            vec![1, 0],
        )
    }

    /// Views estimated in ascending index order unless changed with [`Self::with_order`].
    pub fn multi_view(
        covariances: CovarianceSet,
        params: MultiViewSparsityParams,
        weights: SpectralWeights,
    ) -> Self {
        let order = (0..covariances.views()).collect();
        Self::base(PatternVariant::MultiView, covariances, params, weights, order)
    }

    pub fn directed(
        x1: &ArrayView2<f64>,
        x2: &ArrayView2<f64>,
        config: &DirectedConfig,
        params: &SparsityParams,
        weights: SpectralWeights,
    ) -> Result<Self> {
        let cov = CovarianceSet::from_views(&[x1.view(), x2.view()])?;
        let y = config.y.view();
        let terms = vec![
            ops::accessory_term(x1, &y, &config.eps1)?,
            ops::accessory_term(x2, &y, &config.eps2)?,
        ];
        let mut p = Self::base(
            PatternVariant::Directed,
            cov,
            MultiViewSparsityParams::from_two_view(params),
            weights,
            vec![1, 0],
        );
        p.accessory = Some(terms);
        Ok(p)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.init_seed = seed;
        self
    }

    pub fn with_init(mut self, init: InitStrategy) -> Self {
        self.init = init;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_order(mut self, order: Vec<usize>) -> Self {
        self.order = order;
        self
    }

    pub fn d(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.covariances.views();
        let d = self.d();
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 || self.restarts == 0 {
            return Err(Error::Config("max_iters and restarts must be at least 1".into()));
        }
        if self.penalties.views() != m || self.penalties.d() != d {
            return Err(Error::Dimension(format!(
                "penalties cover {} views and {} directions, problem has {m} and {d}",
                self.penalties.views(),
                self.penalties.d()
            )));
        }
        for r in 0..m {
            if self.covariances.dim(r) < d {
                return Err(Error::Dimension(format!(
                    "view {} has {} features, fewer than d = {d}",
                    r + 1,
                    self.covariances.dim(r)
                )));
            }
        }
        let mut seen = self.order.clone();
        seen.sort_unstable();
        if seen != (0..m).collect::<Vec<_>>() {
            return Err(Error::Config(format!("order {:?} is not a permutation of the views", self.order)));
        }
        match self.variant {
            PatternVariant::L1TwoView | PatternVariant::L0TwoView if m != 2 => {
                return Err(Error::Config("two-view variants need exactly 2 views".into()))
            }
            PatternVariant::Directed => {
                let Some(acc) = &self.accessory else {
                    return Err(Error::Config("directed variant needs accessory terms".into()));
                };
                if m != 2 || acc.len() != 2 || (0..2).any(|r| acc[r].dim() != (self.covariances.dim(r), d)) {
                    return Err(Error::Dimension("accessory terms do not match the views".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn penalty(&self) -> Penalty {
        match self.variant {
            PatternVariant::L0TwoView => Penalty::L0,
            _ => Penalty::L1,
        }
    }

    fn sub_problem<'a>(&'a self, target: usize, patterns: &'a [Option<SparsityPattern>]) -> SubProblem<'a> {
        let m = self.covariances.views();
        let vars: Vec<usize> = (0..m).filter(|&r| r != target).collect();
        let acc = self.accessory.as_ref();
        SubProblem {
            cov: &self.covariances,
            target,
            masks: vars.iter().map(|&r| patterns[r].as_ref()).collect(),
            linear: vars
                .iter()
                .map(|&r| acc.and_then(|a| ops::nonzero_view(&a[r])))
                .collect(),
            offset: acc.and_then(|a| ops::nonzero_view(&a[target])),
            thresholds: (0..self.d()).map(|j| self.penalties.threshold(target, j)).collect(),
            vars,
            mu: &self.weights,
            penalty: self.penalty(),
        }
    }

    fn initial_blocks(&self, sub: &SubProblem, stage: usize, restart: usize) -> Result<Vec<Matrix>> {
        let d = self.d();
        sub.vars
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                let p = self.covariances.dim(r);
                let spectral = self.init == InitStrategy::Spectral
                    && restart == 0
                    && self.covariances.dim(sub.target) >= d;
                let mut z = if spectral {
                    leading_left_singular_vectors(&self.covariances.get(r, sub.target), d)?
                } else {
                    let seed = derive_seed(self.init_seed, &[stage as u64, r as u64, restart as u64]);
                    random_stiefel(p, d, seed)?.into_matrix()
                };
                if let Some(t) = sub.masks[k] {
                    t.apply(&mut z);
                }
                Ok(z)
            })
            .collect()
    }
}

fn best_run(runs: Vec<Result<SubRun>>) -> Result<SubRun> {
    let mut best: Option<SubRun> = None;
    let mut first_err = None;
    for run in runs {
        match run {
            Ok(r) => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| r.trace.final_objective() > b.trace.final_objective());
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one restart"))
}

/// Runs stage 1 over all target views in `problem.order`.
///
/// Directions whose gradient vanishes or whose support comes out empty are
/// reported in `dead_directions` and zeroed in every pattern; if every
/// direction dies the call fails with `DeadGradient`.
pub fn estimate_patterns(problem: &PatternProblem) -> Result<PatternEstimate> {
    problem.validate()?;
    let m = problem.covariances.views();
    let d = problem.d();
    let mut patterns: Vec<Option<SparsityPattern>> = vec![None; m];
    let mut latest: Vec<Option<Matrix>> = vec![None; m];
    let mut dead = BTreeSet::new();
    let mut traces = Vec::with_capacity(m);

    for (stage, &s) in problem.order.iter().enumerate() {
        let sub = problem.sub_problem(s, &patterns);
        let runs: Vec<Result<SubRun>> = (0..problem.restarts)
            .into_par_iter()
            .map(|k| {
                let init = problem.initial_blocks(&sub, stage, k)?;
                sub.run(init, dead.clone(), problem.max_iters, problem.tol, format!("stage1/view{}", s + 1))
            })
            .collect();
        let run = best_run(runs)?;
        let mut t = sub.support(&run.z, &run.dead);
        dead = run.dead;
        for (j, count) in t.active_counts().into_iter().enumerate() {
            if count == 0 {
                dead.insert(j);
            }
        }
        for &j in &dead {
            t.mask_column_off(j);
        }
        for (k, &r) in sub.vars.iter().enumerate() {
            latest[r] = Some(run.z[k].clone());
        }
        traces.push(run.trace);
        drop(sub);
        patterns[s] = Some(t);
    }

    if dead.len() == d {
        return Err(Error::DeadGradient {
            directions: dead.into_iter().collect(),
        });
    }
    let mut patterns: Vec<SparsityPattern> = patterns.into_iter().map(|t| t.expect("every view estimated")).collect();
    let mut directions = Vec::with_capacity(m);
    for (r, t) in patterns.iter_mut().enumerate() {
        for &j in &dead {
            t.mask_column_off(j);
        }
        let mut z = latest[r].take().expect("every view is a variable in some stage");
        t.apply(&mut z);
        directions.push(z);
    }
    Ok(PatternEstimate {
        patterns,
        directions,
        traces,
        dead_directions: dead.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests;
