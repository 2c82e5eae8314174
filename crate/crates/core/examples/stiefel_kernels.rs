//! The building blocks: polar factors, one stage-1 run and a refinement.

use block_scca::linalg::{gaussian_matrix, orthonormality_deviation, polar, rng_from_seed, singular_values};
use block_scca::model::{Penalty, SparsityParams, SparsityPattern, SpectralWeights};
use block_scca::pattern::{estimate_patterns, PatternProblem};
use block_scca::refine::{refine, RefineInit, RefineProblem};

fn main() -> block_scca::Result<()> {
    let mut rng = rng_from_seed(0);
    let m = gaussian_matrix(8, 3, &mut rng);
    let q = polar(&m.view())?;
    println!("polar factor deviation from orthonormal: {:.1e}", orthonormality_deviation(&q.view()));

    let c = gaussian_matrix(10, 8, &mut rng);
    let mu = SpectralWeights::default_for(2);
    let params = SparsityParams::uniform(2, 0.5, 0.5)?;
    let est = estimate_patterns(&PatternProblem::two_view(c.clone(), &params, mu.clone(), Penalty::L1))?;
    for tr in &est.traces {
        println!("{}: objective {:.4} after {} sweeps", tr.label, tr.final_objective(), tr.iterations);
    }
    println!("active counts {:?} / {:?}", est.patterns[0].active_counts(), est.patterns[1].active_counts());

    // with every entry active, refinement reaches the weighted singular-value sum
    let full = RefineProblem::two_view(c.clone(), SparsityPattern::all_active(10, 2), SparsityPattern::all_active(8, 2), mu.clone())
        .with_init(RefineInit::Cold { seed: 1 });
    let r = refine(&full)?;
    let sv = singular_values(&c.view());
    println!("refined {:.6}, expected {:.6}", r.trace.final_objective(), sv[0] + mu.get(1) * sv[1]);
    Ok(())
}
