//! Penalty selection by permutation test, on signal and on noise.

use block_scca::pipeline::FitConfig;
use block_scca::simgen::{noise_views, planted_factor_views};
use block_scca::tune::tune_grid;

fn main() -> block_scca::Result<()> {
    let grid = [(0.05, 0.05), (0.1, 0.1), (0.15, 0.15)];
    let config = FitConfig::with_d(1);
    for (label, (x1, x2)) in [
        ("planted", planted_factor_views(50, 20, 5, 0.9, 1)?),
        ("noise", noise_views(50, 20, 1)?),
    ] {
        let report = tune_grid(&x1, &x2, &grid, 100, &config, 0.05, 9)?;
        println!("{label}:");
        for cell in &report.cells {
            match &cell.outcome {
                Ok(r) => println!(
                    "  gamma {:?}: rho {:.3}, p {:.3}{}",
                    cell.gamma,
                    r.rho_observed,
                    r.p_value,
                    if cell.significant { " *" } else { "" }
                ),
                Err(e) => println!("  gamma {:?}: {e}", cell.gamma),
            }
        }
        println!("  selected {:?}", report.selected);
    }
    Ok(())
}
