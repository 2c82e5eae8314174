//! Steering the leading direction toward an accessory variable.

use block_scca::linalg::{gaussian_matrix, rng_from_seed};
use block_scca::model::{DirectedConfig, SparsityParams};
use block_scca::pipeline::{fit_directed, fit_two_view, FitConfig};
use block_scca::simgen::planted_factor_views;

fn main() -> block_scca::Result<()> {
    let (x1, x2) = planted_factor_views(60, 20, 5, 0.9, 4)?;
    // accessory variable tied to the first view's features 10..12
    let mut y = gaussian_matrix(60, 1, &mut rng_from_seed(5)) * 0.3;
    for k in 10..12 {
        y.column_mut(0).scaled_add(1.0, &x1.data.column(k));
    }

    let params = SparsityParams::uniform(1, 0.25, 0.25)?;
    let config = FitConfig::with_d(1);
    let plain = fit_two_view(&x1, &x2, &params, &config)?;
    println!("undirected: view 1 active {:?}", plain.patterns[0].active_indices(0));
    for eps in [0.5, 2.0] {
        let directed = DirectedConfig::new(y.clone(), vec![eps], vec![0.0])?;
        let fit = fit_directed(&x1, &x2, &directed, &params, &config)?;
        println!(
            "eps1 = {eps}: view 1 active {:?}, correlation {:?}",
            fit.patterns[0].active_indices(0),
            fit.canonical_correlations
        );
    }
    Ok(())
}
