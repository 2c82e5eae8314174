//! Recovery of planted loadings as the noise eigenvalue grows.

use block_scca::pipeline::FitConfig;
use block_scca::simgen::{sweep_sigma, PenaltyHeuristic, SimConfig, SweepEstimator};

fn main() -> block_scca::Result<()> {
    let grid: Vec<f64> = (0..5).map(|k| 1e-4 * 10f64.powi(k)).collect();
    let est = SweepEstimator::new(FitConfig::with_d(2), PenaltyHeuristic::default());
    let table = sweep_sigma(&SimConfig::new(50, 100, grid[0], 2), &grid, 3, &est, 5)?;
    println!("sigma_ratio  truth_1  truth_2  within");
    for m in &table.medians {
        let show = |v: Option<f64>| v.map_or("   -   ".into(), |x| format!("{x:7.3}"));
        println!("{:11.4}  {}  {}  {}", m.sigma_ratio, show(m.truth_corr_1), show(m.truth_corr_2), show(m.within_corr));
    }
    Ok(())
}
