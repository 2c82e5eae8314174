//! L1 against L0 sparsity patterns on the same data.

use block_scca::model::{Penalty, SparsityParams};
use block_scca::pipeline::{fit_two_view, FitConfig};
use block_scca::simgen::planted_factor_views;

fn main() -> block_scca::Result<()> {
    let (x1, x2) = planted_factor_views(80, 30, 6, 0.9, 7)?;
    let g = 0.15;

    let l1 = fit_two_view(&x1, &x2, &SparsityParams::uniform(1, g, g)?, &FitConfig::with_d(1))?;
    // squaring puts the L0 activity boundary where the L1 one is
    let config = FitConfig { penalty: Penalty::L0, ..FitConfig::with_d(1) };
    let l0 = fit_two_view(&x1, &x2, &SparsityParams::uniform(1, g * g, g * g)?, &config)?;
    let refined = FitConfig { refine_l0: true, ..config.clone() };
    let l0r = fit_two_view(&x1, &x2, &SparsityParams::uniform(1, g * g, g * g)?, &refined)?;

    for (name, fit) in [("l1", &l1), ("l0", &l0), ("l0 + refine", &l0r)] {
        println!(
            "{name:12} view 1 {:?} view 2 {:?} corr {:?}",
            fit.patterns[0].active_indices(0),
            fit.patterns[1].active_indices(0),
            fit.canonical_correlations
        );
    }
    Ok(())
}
