//! Stage 2: active-entry estimation on fixed patterns by alternating masked
//! polar updates, `Z_s ← polar(G_s ∘ T_s) ∘ T_s` with
//! `G_s = Σ_{r≠s} C_srZ_rN (+ X_sᵀYE_sN)`.

use std::collections::BTreeSet;

use ndarray::{ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{derive_seed, polar_columns, random_stiefel, Matrix};
use crate::model::{
    CovarianceSet, DirectedConfig, SparsityPattern, SpectralWeights, StageTrace, StopReason,
    MONOTONE_SLACK,
};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITERS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineVariant {
    TwoView,
    MultiView,
    Directed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefineInit {
    /// Start from these blocks (masked by the patterns before use).
    Warm(Vec<Matrix>),
    /// Seeded random Stiefel points, masked.
    Cold { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct RefineProblem {
    pub variant: RefineVariant,
    pub covariances: CovarianceSet,
    pub patterns: Vec<SparsityPattern>,
    pub weights: SpectralWeights,
    /// `X_iᵀ·Y·E_i` per view (directed variant only).
    pub accessory: Option<Vec<Matrix>>,
    pub init: RefineInit,
    pub max_iters: usize,
    pub tol: f64,
    /// Update order of the views within one iteration.
    pub order: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RefineResult {
    pub directions: Vec<Matrix>,
    pub trace: StageTrace,
    pub dead_directions: Vec<usize>,
}

impl RefineProblem {
    fn base(
        variant: RefineVariant,
        covariances: CovarianceSet,
        patterns: Vec<SparsityPattern>,
        weights: SpectralWeights,
        order: Vec<usize>,
    ) -> Self {
        RefineProblem {
            variant,
            covariances,
            patterns,
            weights,
            accessory: None,
            init: RefineInit::Cold { seed: 0 },
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            order,
        }
    }

    /// `Z2` is updated before `Z1` in every iteration.
    pub fn two_view(c12: Matrix, t1: SparsityPattern, t2: SparsityPattern, weights: SpectralWeights) -> Self {
        Self::base(
            RefineVariant::TwoView,
            CovarianceSet::two_view(c12),
            vec![t1, t2],
            weights,
            vec![1, 0],
        )
    }

    pub fn multi_view(covariances: CovarianceSet, patterns: Vec<SparsityPattern>, weights: SpectralWeights) -> Self {
        let order = (0..covariances.views()).collect();
        Self::base(RefineVariant::MultiView, covariances, patterns, weights, order)
    }

    pub fn directed(
        x1: &ArrayView2<f64>,
        x2: &ArrayView2<f64>,
        config: &DirectedConfig,
        t1: SparsityPattern,
        t2: SparsityPattern,
        weights: SpectralWeights,
    ) -> Result<Self> {
        let cov = CovarianceSet::from_views(&[x1.view(), x2.view()])?;
        let y = config.y.view();
        let mut acc = Vec::with_capacity(2);
        for (x, eps) in [(x1, &config.eps1), (x2, &config.eps2)] {
            if x.nrows() != y.nrows() || eps.len() != weights.len() {
                return Err(Error::Dimension("accessory inputs do not match the views".into()));
            }
            let mut t = x.t().dot(&y);
            for (j, mut col) in t.axis_iter_mut(Axis(1)).enumerate() {
                col *= eps[j];
            }
            acc.push(t);
        }
        let mut p = Self::base(RefineVariant::Directed, cov, vec![t1, t2], weights, vec![1, 0]);
        p.accessory = Some(acc);
        Ok(p)
    }

    pub fn with_init(mut self, init: RefineInit) -> Self {
        self.init = init;
        self
    }

    pub fn with_order(mut self, order: Vec<usize>) -> Self {
        self.order = order;
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

    fn validate(&self) -> Result<()> {
        let m = self.covariances.views();
        let d = self.weights.len();
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::Config("tolerance must be positive and max_iters at least 1".into()));
        }
        if self.patterns.len() != m {
            return Err(Error::Dimension(format!("{} patterns for {m} views", self.patterns.len())));
        }
        for (r, t) in self.patterns.iter().enumerate() {
            if t.dim() != (self.covariances.dim(r), d) {
                return Err(Error::Dimension(format!(
                    "pattern {} is {:?}, expected {}x{d}",
                    r + 1,
                    t.dim(),
                    self.covariances.dim(r)
                )));
            }
        }
        let mut seen = self.order.clone();
        seen.sort_unstable();
        if seen != (0..m).collect::<Vec<_>>() {
            return Err(Error::Config(format!("order {:?} is not a permutation of the views", self.order)));
        }
        if let RefineInit::Warm(blocks) = &self.init {
            if blocks.len() != m || (0..m).any(|r| blocks[r].dim() != (self.covariances.dim(r), d)) {
                return Err(Error::Dimension("warm-start blocks do not match the views".into()));
            }
        }
        if let Some(acc) = &self.accessory {
            if acc.len() != m || (0..m).any(|r| acc[r].dim() != (self.covariances.dim(r), d)) {
                return Err(Error::Dimension("accessory terms do not match the views".into()));
            }
        }
        match self.variant {
            RefineVariant::TwoView | RefineVariant::Directed if m != 2 => {
                Err(Error::Config("two-view refinement needs exactly 2 views".into()))
            }
            RefineVariant::Directed if self.accessory.is_none() => {
                Err(Error::Config("directed refinement needs accessory terms".into()))
            }
            _ => Ok(()),
        }
    }

    /// `Σ_{r<s} tr(Z_rᵀC_rsZ_sN) + Σ_r tr(YᵀX_rZ_rNE_r)`.
    pub fn objective(&self, z: &[Matrix]) -> f64 {
        let m = self.covariances.views();
        let mu = &self.weights;
        let mut f = 0.0;
        for r in 0..m {
            for s in r + 1..m {
                let cz = self.covariances.get(r, s).dot(&z[s]);
                for j in 0..mu.len() {
                    f += mu.get(j) * z[r].column(j).dot(&cz.column(j));
                }
            }
            if let Some(acc) = &self.accessory {
                for j in 0..mu.len() {
                    f += mu.get(j) * acc[r].column(j).dot(&z[r].column(j));
                }
            }
        }
        f
    }

    fn gradient(&self, z: &[Matrix], s: usize) -> Matrix {
        let m = self.covariances.views();
        let mut g = Matrix::zeros((self.covariances.dim(s), self.weights.len()));
        for r in (0..m).filter(|&r| r != s) {
            g += &self.covariances.get(s, r).dot(&z[r]);
        }
        if let Some(acc) = &self.accessory {
            if acc[s].iter().any(|v| *v != 0.0) {
                g += &acc[s];
            }
        }
        for (j, mut col) in g.axis_iter_mut(Axis(1)).enumerate() {
            col *= self.weights.get(j);
        }
        g
    }

    fn update(&self, z: &mut [Matrix], s: usize, dead: &mut BTreeSet<usize>) -> Result<()> {
        let t = &self.patterns[s];
        let mut g = self.gradient(z, s);
        t.apply(&mut g);
        for (j, col) in g.axis_iter(Axis(1)).enumerate() {
            if col.iter().all(|v| *v == 0.0) {
                dead.insert(j);
            }
        }
        let alive: Vec<usize> = (0..self.weights.len()).filter(|j| !dead.contains(j)).collect();
        let mut q = polar_columns(&g.view(), &alive)?;
        t.apply(&mut q);
        z[s] = q;
        Ok(())
    }

    fn initial_blocks(&self) -> Result<Vec<Matrix>> {
        let m = self.covariances.views();
        let d = self.weights.len();
        let mut blocks = match &self.init {
            RefineInit::Warm(b) => b.clone(),
            RefineInit::Cold { seed } => (0..m)
                .map(|r| Ok(random_stiefel(self.covariances.dim(r), d, derive_seed(*seed, &[r as u64]))?.into_matrix()))
                .collect::<Result<Vec<_>>>()?,
        };
        for (z, t) in blocks.iter_mut().zip(&self.patterns) {
            t.apply(z);
        }
        Ok(blocks)
    }
}

/// Runs the alternating updates of any variant until the relative change of
/// the objective is at most `tol` or `max_iters` iterations have run.
pub fn refine(problem: &RefineProblem) -> Result<RefineResult> {
    problem.validate()?;
    let d = problem.weights.len();
    let mut z = problem.initial_blocks()?;
    let mut dead: BTreeSet<usize> = BTreeSet::new();
    for (j, count) in pattern_counts(&problem.patterns).into_iter().enumerate() {
        if count == 0 {
            dead.insert(j);
        }
    }
    if dead.len() == d {
        return Err(Error::EmptySupport {
            direction: *dead.iter().next().unwrap(),
        });
    }
    let mut objective = vec![problem.objective(&z)];
    let mut monotone = true;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;
    while iterations < problem.max_iters {
        for &s in &problem.order {
            problem.update(&mut z, s, &mut dead)?;
        }
        iterations += 1;
        let prev = *objective.last().unwrap();
        let f = problem.objective(&z);
        objective.push(f);
        if prev - f > MONOTONE_SLACK * prev.abs().max(1.0) {
            monotone = false;
        }
        if dead.len() == d || (f - prev).abs() <= problem.tol * prev.abs().max(f64::MIN_POSITIVE) {
            stop = StopReason::Tolerance;
            break;
        }
    }
    Ok(RefineResult {
        directions: z,
        trace: StageTrace {
            label: "stage2".into(),
            objective,
            iterations,
            converged: stop == StopReason::Tolerance && monotone,
            stop,
            monotone,
        },
        dead_directions: dead.into_iter().collect(),
    })
}

/// Smallest active count over views, per direction.
fn pattern_counts(patterns: &[SparsityPattern]) -> Vec<usize> {
    let mut out = patterns[0].active_counts();
    for t in &patterns[1..] {
        for (o, c) in out.iter_mut().zip(t.active_counts()) {
            *o = (*o).min(c);
        }
    }
    out
}

fn expect_variant(problem: &RefineProblem, variant: RefineVariant) -> Result<()> {
    if problem.variant != variant {
        return Err(Error::Config(format!(
            "expected a {variant:?} problem, got {:?}",
            problem.variant
        )));
    }
    Ok(())
}

/// Two views: `Z2 ← polar(C12ᵀZ1N ∘ T2) ∘ T2`, then `Z1 ← polar(C12Z2N ∘ T1) ∘ T1`.
pub fn refine_two_view(problem: &RefineProblem) -> Result<RefineResult> {
    expect_variant(problem, RefineVariant::TwoView)?;
    refine(problem)
}

/// Any number of views, one masked polar update per view per iteration.
pub fn refine_multiview(problem: &RefineProblem) -> Result<RefineResult> {
    expect_variant(problem, RefineVariant::MultiView)?;
    refine(problem)
}

/// Two views with the accessory terms `X_iᵀYNE_i` added to each update.
pub fn refine_directed(problem: &RefineProblem) -> Result<RefineResult> {
    expect_variant(problem, RefineVariant::Directed)?;
    refine(problem)
}
