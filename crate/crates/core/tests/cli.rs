mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use block_scca::cli::io::{load_matrix, read_table, write_plain};
use block_scca::model::SparsityParams;
use block_scca::pipeline::{fit_two_view, FitConfig};
use common::coupled_views;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_block-scca");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_owned()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

/// Two coupled views written to `dir`, returning their paths.
fn write_views(dir: &Path, n: usize, p1: usize, p2: usize, seed: u64) -> (PathBuf, PathBuf) {
    let (x1, x2) = coupled_views(n, p1, p2, seed);
    let a = dir.join("x1.csv");
    let b = dir.join("x2.csv");
    write_plain(&a, &x1.feature_names, &x1.data).unwrap();
    write_plain(&b, &x2.feature_names, &x2.data).unwrap();
    (a, b)
}

#[test]
fn load_matrix_standardizes_a_small_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    std::fs::write(&path, "a,b\n1,4\n3,8\n").unwrap();
    let v = load_matrix(&path).unwrap();
    assert_eq!(v.feature_names, vec!["a", "b"]);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for (got, want) in v.data.iter().zip([-h, -h, h, h]) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn constant_column_is_zeroed_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    std::fs::write(&path, "a,b\n1,4\n1,8\n1,9\n").unwrap();
    let v = load_matrix(&path).unwrap();
    assert_eq!(v.constant_columns, vec![0]);
    assert!(v.data.column(0).iter().all(|x| *x == 0.0));
}

#[test]
fn simulate_then_fit_records_seed_and_recovers_truth() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--n", "50", "--p", "200", "--sigma", "1e-4", "--seed", "11", "--out", &s(&sim)]);
    let sim_summary = summary(&sim);
    assert_eq!(sim_summary["seed"], 11);
    assert!(sim_summary["sigma_ratio"].as_f64().unwrap() < 0.5);

    let fit = dir.path().join("fit");
    let truth = format!("{},{}", s(&sim.join("V1_truth.csv")), s(&sim.join("V2_truth.csv")));
    ok(&[
        "fit",
        "--x1",
        &s(&sim.join("X1.csv")),
        "--x2",
        &s(&sim.join("X2.csv")),
        "--d",
        "2",
        "--seed",
        "4",
        "--truth",
        &truth,
        "--out",
        &s(&fit),
    ]);
    let sm = summary(&fit);
    assert_eq!(sm["seed"], 4);
    assert_eq!(sm["config"]["penalty_source"], "heuristic");
    for pair in sm["truth_correlations"].as_array().unwrap() {
        for c in pair.as_array().unwrap() {
            assert!(c.as_f64().unwrap() > 0.9, "{sm}");
        }
    }
    let t1 = read_table(&fit.join("T1.csv")).unwrap();
    assert_eq!(t1.data.dim(), (200, 2));
    assert!(t1.data.iter().all(|v| *v == 0.0 || *v == 1.0));
}

#[test]
fn fit_with_explicit_penalties_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = write_views(dir.path(), 40, 12, 9, 3);
    let out = dir.path().join("fit");
    ok(&["fit", "--x1", &s(&a), "--x2", &s(&b), "--gamma1", "0.2", "--gamma2", "0.2", "--seed", "2", "--out", &s(&out)]);
    let x1 = load_matrix(&a).unwrap();
    let x2 = load_matrix(&b).unwrap();
    let mut config = FitConfig::with_d(1);
    config.seed = 2;
    let fit = fit_two_view(&x1, &x2, &SparsityParams::uniform(1, 0.2, 0.2).unwrap(), &config).unwrap();
    assert_eq!(read_table(&out.join("Z1.csv")).unwrap().data, fit.directions[0]);
    assert_eq!(read_table(&out.join("Z2.csv")).unwrap().data, fit.directions[1]);
    let sm = summary(&out);
    assert_eq!(sm["config"]["penalty_source"], "given");
    let printed = sm["result"]["canonical_correlations"][0].as_f64().unwrap();
    assert!((printed - fit.canonical_correlations[0].unwrap()).abs() < 1e-14);
}

#[test]
fn fit_multi_writes_every_view() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = write_views(dir.path(), 40, 10, 8, 5);
    let (c, _) = write_views(&{
        let d = dir.path().join("third");
        std::fs::create_dir(&d).unwrap();
        d
    }, 40, 7, 6, 6);
    let out = dir.path().join("multi");
    let views = format!("{},{},{}", s(&a), s(&b), s(&c));
    ok(&["fit-multi", "--views", &views, "--gamma", "0.15", "--d", "1", "--out", &s(&out)]);
    for name in ["Z1.csv", "Z2.csv", "Z3.csv", "T3.csv", "summary.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let sm = summary(&out);
    assert_eq!(sm["command"], "fit-multi");
    assert_eq!(sm["result"]["pairwise_correlations"].as_array().unwrap().len(), 3);
}

#[test]
fn fit_directed_runs_with_accessory_file() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = write_views(dir.path(), 40, 10, 8, 7);
    let y = dir.path().join("y.csv");
    let ymat = common::gauss(40, 1, 8);
    write_plain(&y, &["y1".into()], &ymat).unwrap();
    let out = dir.path().join("directed");
    ok(&[
        "fit-directed", "--x1", &s(&a), "--x2", &s(&b), "--y", &s(&y), "--eps1", "0.5", "--eps2", "0.5", "--gamma1",
        "0.15", "--gamma2", "0.15", "--out", &s(&out),
    ]);
    let sm = summary(&out);
    assert_eq!(sm["config"]["eps1"][0], 0.5);
    assert!(out.join("Z2.csv").exists());
}

#[test]
fn tune_reports_the_unpermuted_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = write_views(dir.path(), 40, 10, 8, 9);
    let out = dir.path().join("tune");
    ok(&[
        "tune", "--x1", &s(&a), "--x2", &s(&b), "--gamma-grid", "0.1:0.1,0.2:0.2", "--perms", "20", "--seed", "3",
        "--out", &s(&out),
    ]);
    let grid = read_table(&out.join("tune_grid.csv"));
    // the error column is text, so read the file as records
    assert!(grid.is_err());
    let text = std::fs::read_to_string(out.join("tune_grid.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    let sm = summary(&out);
    let idx = sm["selected"]["index"].as_u64().unwrap() as usize;
    let rho: f64 = lines[idx + 1].split(',').nth(2).unwrap().parse().unwrap();
    let fitted = sm["result"]["canonical_correlations"][0].as_f64().unwrap();
    assert!((rho - fitted).abs() < 1e-14, "{rho} vs {fitted}");
}

#[test]
fn sweep_writes_raw_and_median_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    ok(&["sweep", "--n", "30", "--p", "60", "--sigma-grid", "1e-4:1e-1:3", "--reps", "2", "--out", &s(&out)]);
    let raw = std::fs::read_to_string(out.join("sweep_raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 1 + 6);
    let med = read_table(&out.join("sweep_median.csv")).unwrap();
    assert_eq!(med.data.nrows(), 6);
    assert_eq!(summary(&out)["command"], "sweep");
}

#[test]
fn failures_exit_nonzero_with_category() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,2\n3\n").unwrap();
    let out = run(&["fit", "--x1", &s(&bad), "--x2", &s(&bad), "--out", &s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("RaggedRows"));

    let (a, b) = write_views(dir.path(), 30, 6, 6, 1);
    let out = run(&["fit", "--x1", &s(&a), "--x2", &s(&b), "--gamma1", "100", "--gamma2", "100", "--out", &s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DeadGradient"));

    assert_eq!(run(&["fit", "--x1", "only"]).status.code(), Some(2));
}
