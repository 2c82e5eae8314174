use approx::assert_abs_diff_eq;
use ndarray::{array, Array2};

use super::*;
use crate::linalg::{gaussian_matrix, rng_from_seed};
use crate::model::objective_l1_surrogate;

fn mu(v: &[f64]) -> SpectralWeights {
    SpectralWeights::new(v.to_vec()).unwrap()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn column_norms(c: &Matrix) -> Vec<f64> {
    c.columns().into_iter().map(|col| col.dot(&col).sqrt()).collect()
}

#[test]
fn sweep_l1_fixed_point_at_identity() {
    let i2 = Array2::<f64>::eye(2);
    let z = sweep_l1(&i2.view(), &i2.view(), &[0.0, 0.0], &mu(&[1.0, 0.9]), None).unwrap();
    assert_abs_diff_eq!(z, i2, epsilon = 1e-14);
}

#[test]
fn sweep_l1_dead_when_penalty_exceeds_column_norms() {
    let c = gaussian_matrix(4, 3, &mut rng_from_seed(1));
    let w = mu(&[1.0, 0.75]);
    let max_norm = column_norms(&c).into_iter().fold(0.0, f64::max);
    let gamma: Vec<f64> = (0..2).map(|j| w.get(j) * max_norm + 1.0).collect();
    let z = crate::linalg::random_stiefel(4, 2, 3).unwrap();
    let err = sweep_l1(&c.view(), &z.view(), &gamma, &w, None).unwrap_err();
    assert_eq!(err, Error::DeadGradient { directions: vec![0, 1] });
}

#[test]
fn sweep_l1_hand_example() {
    let c = array![[1.0, 0.5], [0.5, 1.0]];
    let z = array![[1.0], [0.0]];
    let out = sweep_l1(&c.view(), &z.view(), &[0.4], &mu(&[1.0]), None).unwrap();
    let expect = unit(&[0.65, 0.40]);
    assert_abs_diff_eq!(out[[0, 0]], expect[0], epsilon = 1e-12);
    assert_abs_diff_eq!(out[[1, 0]], expect[1], epsilon = 1e-12);
    assert_abs_diff_eq!(out[[0, 0]], 0.8517, epsilon = 5e-5);
    assert_abs_diff_eq!(out[[1, 0]], 0.5241, epsilon = 5e-5);
}

#[test]
fn sweep_l0_examples() {
    let i2 = Array2::<f64>::eye(2);
    let w = mu(&[1.0, 0.9]);
    let z = sweep_l0(&i2.view(), &i2.view(), &[0.0, 0.0], &w, None).unwrap();
    assert_abs_diff_eq!(z, i2, epsilon = 1e-14);

    let c = gaussian_matrix(3, 4, &mut rng_from_seed(2));
    let max_norm = column_norms(&c).into_iter().fold(0.0, f64::max);
    let gamma: Vec<f64> = (0..2).map(|j| (w.get(j) * max_norm).powi(2) + 1e-9).collect();
    let z0 = crate::linalg::random_stiefel(3, 2, 5).unwrap();
    assert!(matches!(
        sweep_l0(&c.view(), &z0.view(), &gamma, &w, None),
        Err(Error::DeadGradient { .. })
    ));

    let c = array![[1.0, 0.5], [0.5, 1.0]];
    let z = array![[1.0], [0.0]];
    let out = sweep_l0(&c.view(), &z.view(), &[0.4], &mu(&[1.0]), None).unwrap();
    assert_abs_diff_eq!(out[[0, 0]], 0.8944, epsilon = 5e-5);
    assert_abs_diff_eq!(out[[1, 0]], 0.4472, epsilon = 5e-5);
    assert_abs_diff_eq!(out[[0, 0]], 2.0 / 5f64.sqrt(), epsilon = 1e-12);
}

#[test]
fn masked_sweep_stays_on_the_mask() {
    let c = gaussian_matrix(5, 4, &mut rng_from_seed(11));
    let z = crate::linalg::random_stiefel(5, 2, 12).unwrap();
    let t = SparsityPattern::new(array![
        [true, false],
        [true, true],
        [false, true],
        [true, false],
        [false, true]
    ]);
    let mut z0 = z.into_matrix();
    t.apply(&mut z0);
    let out = sweep_l1(&c.view(), &z0.view(), &[0.0, 0.0], &mu(&[1.0, 0.5]), Some(&t)).unwrap();
    assert!(t.contains_support_of(&out.view()));
}

#[test]
fn multiview_with_two_views_is_the_l1_sweep() {
    let c = gaussian_matrix(4, 5, &mut rng_from_seed(3));
    let z1 = crate::linalg::random_stiefel(4, 2, 9).unwrap().into_matrix();
    let w = mu(&[1.0, 0.7]);
    let params = SparsityParams::new(vec![0.3, 0.2], vec![0.4, 0.1]).unwrap();
    let gamma = MultiViewSparsityParams::from_two_view(&params);
    let cov = CovarianceSet::two_view(c.clone());
    let z = vec![z1.clone(), Array2::zeros((5, 2))];
    let out = sweep_multiview(&cov, &z, 1, &gamma, &w, &[None, None]).unwrap();
    let direct = sweep_l1(&c.view(), &z1.view(), &params.gamma2, &w, None).unwrap();
    assert_eq!(out[0], direct);
}

#[test]
fn multiview_all_zero_covariances_die() {
    let dims = vec![2, 2, 2];
    let blocks = vec![
        (0, 1, Array2::zeros((2, 2))),
        (0, 2, Array2::zeros((2, 2))),
        (1, 2, Array2::zeros((2, 2))),
    ];
    let cov = CovarianceSet::from_blocks(dims, blocks).unwrap();
    let z = vec![Array2::eye(2); 3];
    let gamma = MultiViewSparsityParams::uniform(3, &[0.0, 0.0]).unwrap();
    let err = sweep_multiview(&cov, &z, 2, &gamma, &mu(&[1.0, 0.5]), &[None, None, None]).unwrap_err();
    assert_eq!(err, Error::DeadGradient { directions: vec![0, 1] });
}

/// Plain-loop transcription of one multi-view sweep for `d = 1`, used as an oracle.
fn multiview_oracle(c: &[[Vec<Vec<f64>>; 3]; 3], z: &mut [Vec<f64>; 3], s: usize, gamma_sum: f64, m: f64) {
    let p = 2;
    for r in (0..3).filter(|&r| r != s) {
        // aggregate projections on the target view
        let mut a = vec![0.0; p];
        for (i, ai) in a.iter_mut().enumerate() {
            for q in (0..3).filter(|&q| q != s) {
                for k in 0..p {
                    *ai += c[q][s][k][i] * z[q][k];
                }
            }
        }
        let mut g = vec![0.0; p];
        for (i, &ai) in a.iter().enumerate() {
            let h = (m * ai.abs() - gamma_sum).max(0.0);
            let sg = if ai > 0.0 { 1.0 } else if ai < 0.0 { -1.0 } else { 0.0 };
            for (k, gk) in g.iter_mut().enumerate() {
                *gk += m * h * sg * c[r][s][k][i];
            }
        }
        for l in (0..3).filter(|&l| l != r && l != s) {
            for (k, gk) in g.iter_mut().enumerate() {
                for q in 0..p {
                    *gk += m * c[r][l][k][q] * z[l][q];
                }
            }
        }
        z[r] = unit(&g);
    }
}

#[test]
fn multiview_matches_loop_oracle() {
    let mut rng = rng_from_seed(7);
    let c01 = gaussian_matrix(2, 2, &mut rng);
    let c02 = gaussian_matrix(2, 2, &mut rng);
    let c12 = gaussian_matrix(2, 2, &mut rng);
    let cov = CovarianceSet::from_blocks(
        vec![2, 2, 2],
        vec![(0, 1, c01.clone()), (0, 2, c02.clone()), (1, 2, c12.clone())],
    )
    .unwrap();
    let to_vec = |m: &Matrix| -> Vec<Vec<f64>> { m.rows().into_iter().map(|r| r.to_vec()).collect() };
    let tr = |m: &Matrix| m.t().to_owned();
    let empty = Vec::new();
    let c = [
        [empty.clone(), to_vec(&c01), to_vec(&c02)],
        [to_vec(&tr(&c01)), empty.clone(), to_vec(&c12)],
        [to_vec(&tr(&c02)), to_vec(&tr(&c12)), empty],
    ];
    let z0: Vec<Matrix> = (0..3)
        .map(|r| crate::linalg::random_stiefel(2, 1, 70 + r).unwrap().into_matrix())
        .collect();
    let gamma = MultiViewSparsityParams::uniform(3, &[0.1]).unwrap();
    let out = sweep_multiview(&cov, &z0, 1, &gamma, &mu(&[0.8]), &[None, None, None]).unwrap();
    let mut zv = [z0[0].column(0).to_vec(), z0[1].column(0).to_vec(), z0[2].column(0).to_vec()];
    multiview_oracle(&c, &mut zv, 1, 0.2, 0.8);
    for r in [0, 2] {
        for k in 0..2 {
            assert_abs_diff_eq!(out[r][[k, 0]], zv[r][k], epsilon = 1e-12);
        }
    }
    assert_eq!(out[1], z0[1]);
}

fn directed_inputs() -> (Matrix, Matrix, Matrix) {
    let mut rng = rng_from_seed(21);
    let x1 = gaussian_matrix(6, 2, &mut rng);
    let x2 = gaussian_matrix(6, 2, &mut rng);
    let y = gaussian_matrix(6, 1, &mut rng);
    (x1, x2, y)
}

#[test]
fn directed_without_weights_is_the_l1_sweep() {
    let (x1, x2, y) = directed_inputs();
    let c = crate::linalg::cross_covariance(&x1.view(), &x2.view()).unwrap();
    let cfg = DirectedConfig::new(y, vec![0.0], vec![0.0]).unwrap();
    let z = array![[0.6], [0.8]];
    let w = mu(&[1.0]);
    let a = sweep_directed(&c.view(), &x1.view(), &x2.view(), &cfg, &z.view(), &[0.05], &w, None).unwrap();
    let b = sweep_l1(&c.view(), &z.view(), &[0.05], &w, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn directed_term_vanishes_when_orthogonal() {
    let (x1, x2, _) = directed_inputs();
    // y orthogonal to both columns of X1
    let q = crate::linalg::polar(&x1.view()).unwrap();
    let mut y = Array2::from_shape_fn((6, 1), |(i, _)| (i as f64 + 1.0).sin());
    let proj = q.dot(&q.t().dot(&y));
    y -= &proj;
    let cfg = DirectedConfig::new(y, vec![2.0], vec![0.0]).unwrap();
    let c = crate::linalg::cross_covariance(&x1.view(), &x2.view()).unwrap();
    let z = array![[0.6], [0.8]];
    let w = mu(&[1.0]);
    let a = sweep_directed(&c.view(), &x1.view(), &x2.view(), &cfg, &z.view(), &[0.05], &w, None).unwrap();
    let b = sweep_l1(&c.view(), &z.view(), &[0.05], &w, None).unwrap();
    assert_abs_diff_eq!(a, b, epsilon = 1e-12);
}

#[test]
fn directed_hand_evaluation() {
    let x1 = array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
    let x2 = array![[1.0, 1.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -2.0]];
    let y = array![[1.0], [1.0], [0.0], [0.0]];
    let cfg = DirectedConfig::new(y, vec![0.5], vec![0.5]).unwrap();
    let c = crate::linalg::cross_covariance(&x1.view(), &x2.view()).unwrap();
    // C12 = [[0.5, 0.25], [0, 0.75]], y = (1,1,0,0)/√2
    assert_abs_diff_eq!(c, array![[0.5, 0.25], [0.0, 0.75]], epsilon = 1e-15);
    let r = 1.0 / 2f64.sqrt();
    let z = array![[1.0], [0.0]];
    // a_i = c_iᵀz + 0.5·x_{2i}ᵀy: a_1 = 0.5 + 0.5·r, a_2 = 0.25 + 0.5·2r
    let a1 = 0.5 + 0.5 * r;
    let a2 = 0.25 + r;
    let gamma = 0.6;
    let h1 = (a1 - gamma).max(0.0);
    let h2 = (a2 - gamma).max(0.0);
    // ε1·X1ᵀy = 0.5·(r, r)
    let g = [h1 * 0.5 + h2 * 0.25 + 0.5 * r, h2 * 0.75 + 0.5 * r];
    let expect = unit(&g);
    let out = sweep_directed(&c.view(), &x1.view(), &x2.view(), &cfg, &z.view(), &[gamma], &mu(&[1.0]), None).unwrap();
    assert_abs_diff_eq!(out[[0, 0]], expect[0], epsilon = 1e-12);
    assert_abs_diff_eq!(out[[1, 0]], expect[1], epsilon = 1e-12);
}

#[test]
fn support_rules() {
    let c = array![[0.5, 0.0, -0.3], [0.0, 0.0, 0.4]];
    let z = array![[1.0], [0.0]];
    let t = support_l1(&c.view(), &z.view(), &[0.0], &mu(&[1.0])).unwrap();
    assert_eq!(t.active_indices(0), vec![0, 2]);

    // |c_1ᵀz| = 0.5 = γ/μ exactly → inactive
    let t = support_l1(&c.view(), &z.view(), &[0.25], &mu(&[0.5])).unwrap();
    assert_eq!(t.active_indices(0), Vec::<usize>::new());
    let t = support_l1(&c.view(), &z.view(), &[0.2], &mu(&[0.5])).unwrap();
    assert_eq!(t.active_indices(0), vec![0]);

    // squared rule: 0.25 ≤ γ/μ² = 0.25 → inactive, 0.09 inactive
    let t = support_l0(&c.view(), &z.view(), &[0.25], &mu(&[1.0])).unwrap();
    assert!(t.active_indices(0).is_empty());
    let t = support_l0(&c.view(), &z.view(), &[0.2], &mu(&[1.0])).unwrap();
    assert_eq!(t.active_indices(0), vec![0]);
}

#[test]
fn support_sufficient_condition_ignores_directions() {
    let c = gaussian_matrix(4, 6, &mut rng_from_seed(4));
    let norms = column_norms(&c);
    let w = mu(&[0.9]);
    let gamma = w.get(0) * norms[2];
    for seed in 0..20 {
        let z = crate::linalg::random_stiefel(4, 1, seed).unwrap();
        let t = support_l1(&c.view(), &z.view(), &[gamma], &w).unwrap();
        for (i, n) in norms.iter().enumerate() {
            if *n <= gamma / w.get(0) {
                assert!(!t.is_active(i, 0));
            }
        }
    }
}

#[test]
fn support_variants_agree_with_two_view_rule() {
    let c = gaussian_matrix(3, 4, &mut rng_from_seed(8));
    let z1 = crate::linalg::random_stiefel(3, 2, 1).unwrap().into_matrix();
    let w = mu(&[1.0, 0.5]);
    let base = support_l1(&c.view(), &z1.view(), &[0.2, 0.1], &w).unwrap();
    let cov = CovarianceSet::two_view(c.clone());
    let gamma = MultiViewSparsityParams::from_two_view(&SparsityParams::new(vec![0.0; 2], vec![0.2, 0.1]).unwrap());
    let mv = support_multiview(&cov, &[z1.clone(), Array2::zeros((4, 2))], 1, &gamma, &w).unwrap();
    assert_eq!(mv, base);

    let (x1, x2, _) = directed_inputs();
    let x1 = x1.dot(&Array2::<f64>::eye(2));
    let y = Array2::ones((6, 2));
    let cfg = DirectedConfig::new(y, vec![0.0; 2], vec![0.0; 2]).unwrap();
    let c2 = crate::linalg::cross_covariance(&x1.view(), &x2.view()).unwrap();
    let z = Array2::eye(2);
    let d = support_directed(&c2.view(), &x2.view(), &cfg, &z.view(), &[0.1, 0.1], &w).unwrap();
    assert_eq!(d, support_l1(&c2.view(), &z.view(), &[0.1, 0.1], &w).unwrap());
}

#[test]
fn shrink_examples() {
    let c = Array2::from_shape_fn((4, 4), |(i, j)| (10 * i + j) as f64);
    let all = SparsityPattern::all_active(4, 1);
    assert_eq!(shrink_covariance(&c.view(), &all, 0, Side::Cols).unwrap(), c);

    let mut mask = Array2::from_elem((5, 1), false);
    mask[[2, 0]] = true;
    let e3 = SparsityPattern::new(mask);
    let c5 = Array2::from_shape_fn((5, 5), |(i, j)| (10 * i + j) as f64);
    let rows = shrink_covariance(&c5.view(), &e3, 0, Side::Rows).unwrap();
    assert_eq!(rows, c5.slice(ndarray::s![2..3, ..]).to_owned());

    let t = SparsityPattern::new(array![[false], [true], [false], [true]]);
    let cols = shrink_covariance(&c.view(), &t, 0, Side::Cols).unwrap();
    assert_eq!(cols, array![[1.0, 3.0], [11.0, 13.0], [21.0, 23.0], [31.0, 33.0]]);

    let none = SparsityPattern::new(Array2::from_elem((4, 1), false));
    assert_eq!(
        shrink_covariance(&c.view(), &none, 0, Side::Cols).unwrap_err(),
        Error::EmptySupport { direction: 0 }
    );
}

/// For `d = 1`, one masked sweep equals the sweep on the covariance shrunk to
/// the mask's rows, embedded back.
#[test]
fn masked_sweep_equals_shrunk_sweep() {
    let c = gaussian_matrix(6, 5, &mut rng_from_seed(31));
    let t = SparsityPattern::new(array![[true], [false], [true], [true], [false], [false]]);
    let mut z = crate::linalg::random_stiefel(6, 1, 2).unwrap().into_matrix();
    t.apply(&mut z);
    let w = mu(&[1.0]);
    let masked = sweep_l1(&c.view(), &z.view(), &[0.05], &w, Some(&t)).unwrap();
    let small_c = shrink_covariance(&c.view(), &t, 0, Side::Rows).unwrap();
    let idx = t.active_indices(0);
    let small_z = z.select(ndarray::Axis(0), &idx);
    let small = sweep_l1(&small_c.view(), &small_z.view(), &[0.05], &w, None).unwrap();
    for (k, &i) in idx.iter().enumerate() {
        assert_abs_diff_eq!(masked[[i, 0]], small[[k, 0]], epsilon = 1e-12);
    }
}

#[test]
fn planted_block_support_is_recovered() {
    let mut c = Array2::from_elem((5, 5), 0.02);
    for i in 0..2 {
        for j in 0..2 {
            c[[i, j]] = 0.9;
        }
    }
    let params = SparsityParams::new(vec![0.5], vec![0.5]).unwrap();
    let p = PatternProblem::two_view(c, &params, mu(&[1.0]), Penalty::L1).with_init(InitStrategy::Spectral);
    let est = estimate_patterns(&p).unwrap();
    assert_eq!(est.patterns[0].active_indices(0), vec![0, 1]);
    assert_eq!(est.patterns[1].active_indices(0), vec![0, 1]);
    assert!(est.converged());
}

#[test]
fn zero_penalty_keeps_everything() {
    let c = gaussian_matrix(5, 4, &mut rng_from_seed(5));
    let params = SparsityParams::uniform(2, 0.0, 0.0).unwrap();
    let est = estimate_patterns(&PatternProblem::two_view(c, &params, mu(&[1.0, 0.6]), Penalty::L1)).unwrap();
    assert_eq!(est.patterns[0], SparsityPattern::all_active(5, 2));
    assert_eq!(est.patterns[1], SparsityPattern::all_active(4, 2));
}

/// Maximum of the surrogate over a 0.01-radian grid on the unit sphere in ℝ³.
fn sphere_grid_max(c: &Matrix, gamma: f64, m: f64) -> f64 {
    let w = mu(&[m]);
    let step = 0.01;
    let mut best = 0.0f64;
    let nt = (std::f64::consts::PI / step) as usize + 1;
    let np = (std::f64::consts::TAU / step) as usize;
    let mut z = Array2::zeros((3, 1));
    for it in 0..=nt {
        let th = it as f64 * step;
        for ip in 0..np {
            let ph = ip as f64 * step;
            z[[0, 0]] = th.sin() * ph.cos();
            z[[1, 0]] = th.sin() * ph.sin();
            z[[2, 0]] = th.cos();
            best = best.max(objective_l1_surrogate(&c.view(), &z.view(), &[gamma], &w).unwrap());
        }
    }
    best
}

#[test]
fn converged_objective_matches_sphere_grid() {
    let c = gaussian_matrix(3, 3, &mut rng_from_seed(41));
    let gamma = 0.3;
    let params = SparsityParams::new(vec![gamma], vec![gamma]).unwrap();
    let p = PatternProblem::two_view(c.clone(), &params, mu(&[1.0]), Penalty::L1)
        .with_seed(1)
        .with_restarts(5);
    let est = estimate_patterns(&p).unwrap();
    let f = est.traces[0].final_objective();
    let grid = sphere_grid_max(&c, gamma, 1.0);
    assert!((f - grid).abs() <= 1e-3, "converged {f} vs grid {grid}");
}

#[test]
fn restarts_are_deterministic() {
    let c = gaussian_matrix(8, 7, &mut rng_from_seed(6));
    let params = SparsityParams::uniform(2, 0.2, 0.2).unwrap();
    let p = PatternProblem::two_view(c, &params, mu(&[1.0, 0.5]), Penalty::L1)
        .with_seed(10)
        .with_restarts(4);
    let a = estimate_patterns(&p).unwrap();
    let b = estimate_patterns(&p).unwrap();
    assert_eq!(a.patterns, b.patterns);
    assert_eq!(a.directions, b.directions);
}

#[test]
fn random_start_below_the_threshold_dies() {
    // projections of a random start never reach γ, so the gradient is zero at once
    let mut c = Array2::from_elem((5, 5), 0.02);
    c[[0, 0]] = 0.9;
    let params = SparsityParams::new(vec![0.85], vec![0.85]).unwrap();
    let p = PatternProblem::two_view(c.clone(), &params, mu(&[1.0]), Penalty::L1).with_seed(3);
    assert!(matches!(estimate_patterns(&p), Err(Error::DeadGradient { .. })));
    let est = estimate_patterns(&p.with_init(InitStrategy::Spectral)).unwrap();
    assert_eq!(est.patterns[1].active_indices(0), vec![0]);
}

#[test]
fn everything_dead_is_an_error() {
    let c = gaussian_matrix(3, 3, &mut rng_from_seed(9));
    let params = SparsityParams::uniform(1, 100.0, 100.0).unwrap();
    let err = estimate_patterns(&PatternProblem::two_view(c, &params, mu(&[1.0]), Penalty::L1)).unwrap_err();
    assert_eq!(err, Error::DeadGradient { directions: vec![0] });
}

#[test]
fn invalid_problems_are_rejected() {
    let c = gaussian_matrix(3, 3, &mut rng_from_seed(9));
    let params = SparsityParams::uniform(1, 0.1, 0.1).unwrap();
    let p = PatternProblem::two_view(c.clone(), &params, mu(&[1.0]), Penalty::L1).with_tol(0.0);
    assert!(matches!(estimate_patterns(&p), Err(Error::Config(_))));
    let p = PatternProblem::two_view(c, &params, mu(&[1.0]), Penalty::L1).with_order(vec![0, 0]);
    assert!(matches!(estimate_patterns(&p), Err(Error::Config(_))));
}
