//! Three views sharing one latent factor, fitted jointly.

use block_scca::model::MultiViewSparsityParams;
use block_scca::pipeline::{fit_multi_view, FitConfig};
use block_scca::simgen::planted_factor_views;

fn main() -> block_scca::Result<()> {
    let (a, b) = planted_factor_views(60, 15, 4, 0.95, 3)?;
    let (c, _) = planted_factor_views(60, 12, 3, 0.95, 3)?;
    let views = vec![a, b, c];

    let params = MultiViewSparsityParams::uniform(views.len(), &[0.1])?;
    let fit = fit_multi_view(&views, &params, &FitConfig::with_d(1))?;
    for pc in &fit.pairwise_correlations {
        println!("views {:?}: correlation {:?}", pc.views, pc.values);
    }
    for (r, t) in fit.patterns.iter().enumerate() {
        println!("view {} active features {:?}", r + 1, t.active_indices(0));
    }
    Ok(())
}
