//! One stage-1 sub-problem: estimate the pattern of a target view by
//! Gauss-Seidel sweeps over the directions of every other view.
//!
//! All four variants reduce to this kernel. The target view `s` drives the
//! hinge through the projections `A = Σ_{r≠s} C_rsᵀ Z_r (+ offset)`; each
//! variable block `Z_r` is updated with
//! `G_r = C_rs·W(A) + Σ_{l≠r,s} C_rl·Z_l·N + L_r`, masked, then polar-projected.
//! `G_r` is half the gradient of
//! `F = hinge(A) + 2·Σ_{r<l} tr(Z_rᵀC_rlZ_lN) + 2·Σ_r ⟨L_r, Z_r⟩`,
//! which is convex in each block, so unmasked sweeps never decrease `F`.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2, Axis, Zip};

use crate::error::Result;
use crate::linalg::{polar_columns, Matrix};
use crate::model::{
    surrogate_from_projections, CovarianceSet, Penalty, SparsityPattern, SpectralWeights,
    StageTrace, StopReason, MONOTONE_SLACK,
};

pub(crate) struct SubProblem<'a> {
    pub cov: &'a CovarianceSet,
    pub target: usize,
    /// Variable views in sweep order.
    pub vars: Vec<usize>,
    pub masks: Vec<Option<&'a SparsityPattern>>,
    /// Linear gradient term per variable (`p_r × d`).
    pub linear: Vec<Option<ArrayView2<'a, f64>>>,
    /// Added to the projections (`p_s × d`).
    pub offset: Option<ArrayView2<'a, f64>>,
    pub thresholds: Vec<f64>,
    pub mu: &'a SpectralWeights,
    pub penalty: Penalty,
}

pub(crate) struct SubRun {
    pub z: Vec<Matrix>,
    pub trace: StageTrace,
    pub dead: BTreeSet<usize>,
}

#[inline]
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Multiplies column `j` by `μ_j`.
fn scale_columns(m: &mut Matrix, mu: &SpectralWeights) {
    for (j, mut col) in m.axis_iter_mut(Axis(1)).enumerate() {
        col *= mu.get(j);
    }
}

impl SubProblem<'_> {
    pub fn d(&self) -> usize {
        self.mu.len()
    }

    pub fn projections(&self, z: &[Matrix]) -> Matrix {
        let mut a: Matrix = Array2::zeros((self.cov.dim(self.target), self.d()));
        for (k, &r) in self.vars.iter().enumerate() {
            a += &self.cov.get(r, self.target).t().dot(&z[k]);
        }
        if let Some(off) = &self.offset {
            a += off;
        }
        a
    }

    /// Hinge weights: `μ[μ|a|−γ]₊·sgn(a)` for L1, `μ²·1{(μa)²>γ}·a` for L0.
    fn weights(&self, a: &Matrix) -> Matrix {
        let mut w = a.clone();
        for (j, mut col) in w.axis_iter_mut(Axis(1)).enumerate() {
            let (m, g) = (self.mu.get(j), self.thresholds[j]);
            match self.penalty {
                Penalty::L1 => col.mapv_inplace(|v| m * (m * v.abs() - g).max(0.0) * sgn(v)),
                Penalty::L0 => {
                    col.mapv_inplace(|v| if (m * v).powi(2) > g { m * m * v } else { 0.0 })
                }
            }
        }
        w
    }

    pub fn objective(&self, z: &[Matrix]) -> f64 {
        let a = self.projections(z);
        let mut f = surrogate_from_projections(&a.view(), &self.thresholds, self.mu, self.penalty);
        let mut extra = 0.0;
        for k in 0..self.vars.len() {
            for l in k + 1..self.vars.len() {
                let czl = self.cov.get(self.vars[k], self.vars[l]).dot(&z[l]);
                for j in 0..self.d() {
                    extra += self.mu.get(j) * z[k].column(j).dot(&czl.column(j));
                }
            }
            if let Some(lin) = &self.linear[k] {
                extra += (lin * &z[k]).sum();
            }
        }
        f += 2.0 * extra;
        f
    }

    /// Ascent direction for variable `k` before masking.
    pub fn gradient(&self, z: &[Matrix], k: usize) -> Matrix {
        let r = self.vars[k];
        let a = self.projections(z);
        let w = self.weights(&a);
        let mut g = self.cov.get(r, self.target).dot(&w);
        for (l, &v) in self.vars.iter().enumerate() {
            if l != k {
                let mut cz = self.cov.get(r, v).dot(&z[l]);
                scale_columns(&mut cz, self.mu);
                g += &cz;
            }
        }
        if let Some(lin) = &self.linear[k] {
            g += lin;
        }
        g
    }

    /// Updates block `k` in place. Directions whose masked gradient column is
    /// exactly zero are added to `dead` and zeroed.
    pub fn update(&self, z: &mut [Matrix], k: usize, dead: &mut BTreeSet<usize>) -> Result<()> {
        let mut g = self.gradient(z, k);
        if let Some(t) = self.masks[k] {
            t.apply(&mut g);
        }
        for (j, col) in g.axis_iter(Axis(1)).enumerate() {
            if col.iter().all(|v| *v == 0.0) {
                dead.insert(j);
            }
        }
        let alive: Vec<usize> = (0..self.d()).filter(|j| !dead.contains(j)).collect();
        let mut q = polar_columns(&g.view(), &alive)?;
        if let Some(t) = self.masks[k] {
            t.apply(&mut q);
        }
        z[k] = q;
        Ok(())
    }

    /// Iterates full sweeps from `z` until the relative change of the
    /// objective is at most `tol` or `max_iters` sweeps have run.
    pub fn run(
        &self,
        mut z: Vec<Matrix>,
        mut dead: BTreeSet<usize>,
        max_iters: usize,
        tol: f64,
        label: String,
    ) -> Result<SubRun> {
        for zk in z.iter_mut() {
            for &j in &dead {
                zk.column_mut(j).fill(0.0);
            }
        }
        let mut objective = vec![self.objective(&z)];
        let mut monotone = true;
        let mut stop = StopReason::MaxIterations;
        let mut iterations = 0;
        while iterations < max_iters {
            for k in 0..self.vars.len() {
                self.update(&mut z, k, &mut dead)?;
            }
            iterations += 1;
            let prev = *objective.last().unwrap();
            let f = self.objective(&z);
            objective.push(f);
            if prev - f > MONOTONE_SLACK * prev.abs().max(1.0) {
                monotone = false;
            }
            if dead.len() == self.d() || (f - prev).abs() <= tol * prev.abs().max(f64::MIN_POSITIVE) {
                stop = StopReason::Tolerance;
                break;
            }
        }
        let converged = stop == StopReason::Tolerance && monotone;
        Ok(SubRun {
            z,
            trace: StageTrace {
                label,
                objective,
                iterations,
                converged,
                stop,
                monotone,
            },
            dead,
        })
    }

    /// Support rule at the converged blocks; dead directions are inactive.
    pub fn support(&self, z: &[Matrix], dead: &BTreeSet<usize>) -> SparsityPattern {
        let a = self.projections(z);
        let mut mask = Array2::from_elem(a.dim(), false);
        for j in 0..self.d() {
            if dead.contains(&j) {
                continue;
            }
            let (m, g) = (self.mu.get(j), self.thresholds[j]);
            Zip::from(mask.column_mut(j)).and(a.column(j)).for_each(|t, &v| {
                *t = match self.penalty {
                    Penalty::L1 => v.abs() > g / m,
                    Penalty::L0 => v * v > g / (m * m),
                };
            });
        }
        SparsityPattern::new(mask)
    }
}
