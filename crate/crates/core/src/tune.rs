//! Penalty selection by permutation testing.

use ndarray::Axis;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{derive_seed, rng_from_seed};
use crate::model::{SparsityParams, ViewMatrix};
use crate::pipeline::{fit_two_view, FitConfig};

/// Outcome of one permutation test at a fixed penalty pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationReport {
    pub rho_observed: f64,
    /// One entry per permutation; a failed refit is recorded as `−1`.
    pub rho_permuted: Vec<f64>,
    /// `#{ρ_perm > ρ_observed} / P`.
    pub p_value: f64,
    pub gamma: (f64, f64),
    pub seed: u64,
    pub failures: usize,
}

fn first_correlation(x1: &ViewMatrix, x2: &ViewMatrix, params: &SparsityParams, config: &FitConfig) -> Result<f64> {
    let fit = fit_two_view(x1, x2, params, config)?;
    fit.canonical_correlations[0].ok_or(Error::DegenerateCovariate { direction: 0 })
}

/// Rows of `x` reordered by a permutation drawn from `seed`.
pub fn permute_rows(x: &ViewMatrix, seed: u64) -> ViewMatrix {
    let mut idx: Vec<usize> = (0..x.n()).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    ViewMatrix {
        data: x.data.select(Axis(0), &idx),
        ..x.clone()
    }
}

/// Fits on `(X1, X2)`, then on `P` row permutations of `X1` with `X2` held
/// fixed, comparing first canonical correlations.
///
/// Permutation `k` uses the seed `derive_seed(seed, [k])`, so the report does
/// not depend on how many threads run the refits.
pub fn permutation_test(
    x1: &ViewMatrix,
    x2: &ViewMatrix,
    gamma: (f64, f64),
    perms: usize,
    config: &FitConfig,
    seed: u64,
) -> Result<PermutationReport> {
    if perms == 0 {
        return Err(Error::Config("need at least one permutation".into()));
    }
    let params = SparsityParams::uniform(config.d, gamma.0, gamma.1)?;
    let rho = first_correlation(x1, x2, &params, config)?;
    let permuted: Vec<Option<f64>> = (0..perms)
        .into_par_iter()
        .map(|k| {
            let xp = permute_rows(x1, derive_seed(seed, &[k as u64]));
            first_correlation(&xp, x2, &params, config).ok()
        })
        .collect();
    let failures = permuted.iter().filter(|r| r.is_none()).count();
    let rho_permuted: Vec<f64> = permuted.into_iter().map(|r| r.unwrap_or(-1.0)).collect();
    let exceed = rho_permuted.iter().filter(|&&r| r > rho).count();
    Ok(PermutationReport {
        rho_observed: rho,
        p_value: exceed as f64 / perms as f64,
        rho_permuted,
        gamma,
        seed,
        failures,
    })
}

/// One grid point: its report, or the error that stopped it.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub gamma: (f64, f64),
    pub outcome: std::result::Result<PermutationReport, Error>,
    /// `p ≤ alpha`.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub selected: (f64, f64),
    pub selected_index: usize,
    pub cells: Vec<GridCell>,
}

/// Minimal p-value; ties go to the larger `γ1 + γ2`, then to the earlier cell.
pub fn select_cell(cells: &[((f64, f64), Option<f64>)]) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, &((g1, g2), p)) in cells.iter().enumerate() {
        let Some(p) = p else { continue };
        let better = match best {
            None => true,
            Some((_, bp, bs)) => p < bp || (p == bp && g1 + g2 > bs),
        };
        if better {
            best = Some((i, p, g1 + g2));
        }
    }
    best.map(|(i, _, _)| i)
}

/// Runs [`permutation_test`] at every grid point with the same seed; a failed
/// cell is kept in the table and skipped by the selection.
pub fn tune_grid(
    x1: &ViewMatrix,
    x2: &ViewMatrix,
    grid: &[(f64, f64)],
    perms: usize,
    config: &FitConfig,
    alpha: f64,
    seed: u64,
) -> Result<GridReport> {
    if grid.is_empty() {
        return Err(Error::Config("penalty grid is empty".into()));
    }
    let cells: Vec<GridCell> = grid
        .iter()
        .map(|&gamma| {
            let outcome = permutation_test(x1, x2, gamma, perms, config, seed);
            let significant = matches!(&outcome, Ok(r) if r.p_value <= alpha);
            GridCell {
                gamma,
                outcome,
                significant,
            }
        })
        .collect();
    let summary: Vec<_> = cells
        .iter()
        .map(|c| (c.gamma, c.outcome.as_ref().ok().map(|r| r.p_value)))
        .collect();
    match select_cell(&summary) {
        Some(i) => Ok(GridReport {
            selected: grid[i],
            selected_index: i,
            cells,
        }),
        None => Err(cells[0].outcome.clone().unwrap_err()),
    }
}
