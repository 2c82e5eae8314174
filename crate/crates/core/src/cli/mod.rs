//! Command-line front end: `fit`, `fit-multi`, `fit-directed`, `tune`,
//! `simulate` and `sweep`.
//!
//! Every command writes into `--out`. Failures print one line,
//! `error[Category]: detail`, to stderr and exit with status 1.

pub mod io;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{
    pearson, DirectedConfig, FitResult, MultiViewSparsityParams, Penalty, SparsityParams, StageTrace,
    ViewMatrix,
};
use crate::pattern::InitStrategy;
use crate::pipeline::{fit_directed, fit_multi_view, fit_two_view, FitConfig};
use crate::simgen::{generate_views, spearman, sweep_sigma, PenaltyHeuristic, SimConfig, SweepEstimator};
use crate::tune::tune_grid;
use io::{load_matrix, read_table, read_view, write_atomic, write_labeled, write_plain, write_records, Cell};

#[derive(Debug, Parser)]
#[command(name = "block-scca", version, about = "Block sparse canonical correlation analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Two-view fit.
    Fit(FitArgs),
    /// Fit over two or more views.
    FitMulti(MultiArgs),
    /// Two-view fit steered toward accessory variables.
    FitDirected(DirectedArgs),
    /// Choose penalties on a grid by permutation testing, then fit.
    Tune(TuneArgs),
    /// Draw one planted-support instance.
    Simulate(SimulateArgs),
    /// Accuracy over a grid of noise levels.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    L1,
    L0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Spectral,
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Number of directions.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, value_enum, default_value = "l1")]
    pub penalty: PenaltyArg,
    /// Spectral weights, comma-separated and strictly decreasing.
    #[arg(long)]
    pub mu: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    /// Convergence tolerance for both stages.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration cap for both stages.
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, value_enum, default_value = "spectral")]
    pub init: InitArg,
    /// Also run stage 2 after L0 patterns.
    #[arg(long)]
    pub refine_l0: bool,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub x1: PathBuf,
    #[arg(long)]
    pub x2: PathBuf,
    /// Use the data as given instead of centering and scaling each feature.
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// View-1 penalties, comma-separated; a single value applies to every direction.
    #[arg(long, requires = "gamma2")]
    pub gamma1: Option<String>,
    #[arg(long, requires = "gamma1")]
    pub gamma2: Option<String>,
    /// Without --gamma1/--gamma2: fraction of features the first heuristic penalty keeps.
    #[arg(long, default_value_t = 0.2)]
    pub keep: f64,
    /// Planted loadings to score against, one file per view, comma-separated.
    #[arg(long)]
    pub truth: Option<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MultiArgs {
    /// View files, comma-separated.
    #[arg(long)]
    pub views: String,
    /// Per-direction penalty shared by every pair of views.
    #[arg(long)]
    pub gamma: String,
    #[arg(long)]
    pub no_standardize: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DirectedArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Accessory variables, samples by directions.
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long)]
    pub eps1: String,
    #[arg(long)]
    pub eps2: String,
    #[arg(long)]
    pub gamma1: String,
    #[arg(long)]
    pub gamma2: String,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Candidate penalty pairs `g1:g2`, comma-separated.
    #[arg(long)]
    pub gamma_grid: String,
    #[arg(long, default_value_t = 100)]
    pub perms: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    /// Features per view, a multiple of 10.
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long, default_value_t = 2.0)]
    pub sigma1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    /// `lo:hi:count`, geometrically spaced; for example 1e-4:1e-1:100.
    #[arg(long)]
    pub sigma_grid: String,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 2.0)]
    pub sigma1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0.2)]
    pub keep: f64,
    /// Running-median window, in rows.
    #[arg(long, default_value_t = crate::simgen::MEDIAN_WINDOW)]
    pub window: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn parse_list(name: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("--{name}: {t:?} is not a finite number")))
        })
        .collect()
}

/// A single value is repeated `d` times.
pub fn per_direction(name: &str, s: &str, d: usize) -> Result<Vec<f64>> {
    let v = parse_list(name, s)?;
    match v.len() {
        1 => Ok(vec![v[0]; d]),
        k if k == d => Ok(v),
        k => Err(Error::Config(format!("--{name} has {k} values, expected 1 or {d}"))),
    }
}

pub fn parse_gamma_grid(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .map(|cell| {
            let parts: Vec<&str> = cell.split(':').collect();
            let [a, b] = parts[..] else {
                return Err(Error::Config(format!("--gamma-grid: {cell:?} is not g1:g2")));
            };
            Ok((parse_list("gamma-grid", a)?[0], parse_list("gamma-grid", b)?[0]))
        })
        .collect()
}

/// `lo:hi:count` as `count` geometrically spaced values from `lo` to `hi`.
pub fn parse_sigma_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, count] = parts[..] else {
        return Err(Error::Config(format!("--sigma-grid: {s:?} is not lo:hi:count")));
    };
    let lo = parse_list("sigma-grid", lo)?[0];
    let hi = parse_list("sigma-grid", hi)?[0];
    let count: usize = count
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("--sigma-grid: bad count {count:?}")))?;
    if !(lo > 0.0 && hi >= lo && count >= 1) {
        return Err(Error::Config("--sigma-grid needs 0 < lo <= hi and count >= 1".into()));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let ratio = (hi / lo).ln();
    Ok((0..count)
        .map(|k| lo * (ratio * k as f64 / (count - 1) as f64).exp())
        .collect())
}

impl SolverArgs {
    fn config(&self, default_d: usize) -> Result<FitConfig> {
        let d = self.d.unwrap_or(default_d);
        let mut c = FitConfig::with_d(d);
        c.penalty = match self.penalty {
            PenaltyArg::L1 => Penalty::L1,
            PenaltyArg::L0 => Penalty::L0,
        };
        c.mu = self.mu.as_deref().map(|m| parse_list("mu", m)).transpose()?;
        c.seed = self.seed;
        c.restarts = self.restarts;
        c.init = match self.init {
            InitArg::Spectral => InitStrategy::Spectral,
            InitArg::Random => InitStrategy::Random,
        };
        if let Some(t) = self.tol {
            c.stage1_tol = t;
            c.stage2_tol = t;
        }
        if let Some(m) = self.max_iters {
            c.stage1_max_iters = m;
            c.stage2_max_iters = m;
        }
        c.refine_l0 = self.refine_l0;
        c.weights()?;
        Ok(c)
    }
}

fn load(path: &Path, standardize: bool) -> Result<ViewMatrix> {
    let v = if standardize { load_matrix(path) } else { read_view(path) };
    v.map_err(|e| match e {
        Error::Parse { row, column, detail } => Error::Parse {
            row,
            column,
            detail: format!("{}: {detail}", path.display()),
        },
        other => other,
    })
}

fn path_list(s: &str) -> Vec<PathBuf> {
    s.split(',').map(|p| PathBuf::from(p.trim())).collect()
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn direction_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("direction{j}")).collect()
}

fn write_fit(out: &Path, views: &[&ViewMatrix], fit: &FitResult) -> Result<()> {
    for (r, v) in views.iter().enumerate() {
        let names = direction_names(fit.directions[r].ncols());
        write_labeled(&out.join(format!("Z{}.csv", r + 1)), &v.feature_names, &names, &fit.directions[r])?;
        let mut header = vec![""];
        header.extend(names.iter().map(String::as_str));
        let rows: Vec<Vec<Cell>> = fit.patterns[r]
            .mask()
            .rows()
            .into_iter()
            .zip(&v.feature_names)
            .map(|(row, name)| {
                std::iter::once(Cell::Text(name.clone()))
                    .chain(row.iter().map(|&b| Cell::Int(usize::from(b))))
                    .collect()
            })
            .collect();
        write_records(&out.join(format!("T{}.csv", r + 1)), &header, &rows)?;
    }
    Ok(())
}

fn trace_json(t: &StageTrace) -> Value {
    json!({
        "label": t.label,
        "final_objective": t.final_objective(),
        "iterations": t.iterations,
        "converged": t.converged,
        "stop": t.stop,
        "monotone": t.monotone,
    })
}

fn fit_json(fit: &FitResult) -> Value {
    json!({
        "canonical_correlations": fit.canonical_correlations,
        "pairwise_correlations": fit.pairwise_correlations,
        "stage1": fit.stage1.iter().map(trace_json).collect::<Vec<_>>(),
        "stage2": fit.stage2.as_ref().map(trace_json),
        "converged": fit.converged(),
        "dead_directions": fit.dead_directions,
        "orthonormality_deviation": fit.orthonormality_deviation,
        "active_counts": fit.patterns.iter().map(|t| t.active_counts()).collect::<Vec<_>>(),
    })
}

fn write_summary(out: &Path, summary: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(&out.join("summary.json"), text.as_bytes())
}

fn params_json(p: &SparsityParams) -> Value {
    json!({ "gamma1": p.gamma1, "gamma2": p.gamma2 })
}

/// `|corr|` between each fitted direction and the matching planted column.
fn truth_correlations(files: &str, fit: &FitResult) -> Result<Vec<Vec<Option<f64>>>> {
    let paths = path_list(files);
    if paths.len() != fit.directions.len() {
        return Err(Error::Config(format!(
            "--truth names {} files for {} views",
            paths.len(),
            fit.directions.len()
        )));
    }
    paths
        .iter()
        .zip(&fit.directions)
        .map(|(path, z)| {
            let t = read_table(path)?;
            if t.data.nrows() != z.nrows() {
                return Err(Error::Dimension(format!("{} does not match the view", path.display())));
            }
            let k = t.data.ncols().min(z.ncols());
            Ok((0..k)
                .map(|j| pearson(&z.column(j), &t.data.column(j)).map(f64::abs))
                .collect())
        })
        .collect()
}

fn run_fit(a: &FitArgs) -> Result<()> {
    let config = a.solver.config(1)?;
    let standardize = !a.input.no_standardize;
    let x1 = load(&a.input.x1, standardize)?;
    let x2 = load(&a.input.x2, standardize)?;
    let (params, fit, source) = match (&a.gamma1, &a.gamma2) {
        (Some(g1), Some(g2)) => {
            let params = SparsityParams::new(per_direction("gamma1", g1, config.d)?, per_direction("gamma2", g2, config.d)?)?;
            let fit = fit_two_view(&x1, &x2, &params, &config)?;
            (params, fit, "given")
        }
        _ => {
            let h = PenaltyHeuristic {
                keep: a.keep,
                ..PenaltyHeuristic::default()
            };
            let (params, fit) = h.fit(&x1, &x2, &config)?;
            (params, fit, "heuristic")
        }
    };
    prepare_out(&a.out)?;
    write_fit(&a.out, &[&x1, &x2], &fit)?;
    let mut summary = json!({
        "command": "fit",
        "seed": config.seed,
        "config": {
            "fit": config,
            "penalties": params_json(&params),
            "penalty_source": source,
            "standardize": standardize,
            "x1": a.input.x1,
            "x2": a.input.x2,
        },
        "result": fit_json(&fit),
    });
    if let Some(t) = &a.truth {
        summary["truth_correlations"] = json!(truth_correlations(t, &fit)?);
    }
    write_summary(&a.out, &summary)
}

fn run_multi(a: &MultiArgs) -> Result<()> {
    let config = a.solver.config(1)?;
    let paths = path_list(&a.views);
    let views: Vec<ViewMatrix> = paths.iter().map(|p| load(p, !a.no_standardize)).collect::<Result<_>>()?;
    let params = MultiViewSparsityParams::uniform(views.len(), &per_direction("gamma", &a.gamma, config.d)?)?;
    let fit = fit_multi_view(&views, &params, &config)?;
    prepare_out(&a.out)?;
    write_fit(&a.out, &views.iter().collect::<Vec<_>>(), &fit)?;
    write_summary(
        &a.out,
        &json!({
            "command": "fit-multi",
            "seed": config.seed,
            "config": {
                "fit": config,
                "gamma": params.per_direction.iter().map(|g| g[[0, 1]]).collect::<Vec<_>>(),
                "standardize": !a.no_standardize,
                "views": paths,
            },
            "result": fit_json(&fit),
        }),
    )
}

fn run_directed(a: &DirectedArgs) -> Result<()> {
    let config = a.solver.config(1)?;
    let standardize = !a.input.no_standardize;
    let x1 = load(&a.input.x1, standardize)?;
    let x2 = load(&a.input.x2, standardize)?;
    let y = read_table(&a.y)?.data;
    let d = config.d;
    let directed = DirectedConfig::new(y, per_direction("eps1", &a.eps1, d)?, per_direction("eps2", &a.eps2, d)?)?;
    let params = SparsityParams::new(per_direction("gamma1", &a.gamma1, d)?, per_direction("gamma2", &a.gamma2, d)?)?;
    let fit = fit_directed(&x1, &x2, &directed, &params, &config)?;
    prepare_out(&a.out)?;
    write_fit(&a.out, &[&x1, &x2], &fit)?;
    write_summary(
        &a.out,
        &json!({
            "command": "fit-directed",
            "seed": config.seed,
            "config": {
                "fit": config,
                "penalties": params_json(&params),
                "eps1": directed.eps1,
                "eps2": directed.eps2,
                "standardize": standardize,
                "x1": a.input.x1,
                "x2": a.input.x2,
                "y": a.y,
            },
            "result": fit_json(&fit),
        }),
    )
}

fn run_tune(a: &TuneArgs) -> Result<()> {
    let config = a.solver.config(1)?;
    let standardize = !a.input.no_standardize;
    let x1 = load(&a.input.x1, standardize)?;
    let x2 = load(&a.input.x2, standardize)?;
    let grid = parse_gamma_grid(&a.gamma_grid)?;
    let report = tune_grid(&x1, &x2, &grid, a.perms, &config, a.alpha, config.seed)?;
    let (g1, g2) = report.selected;
    let params = SparsityParams::uniform(config.d, g1, g2)?;
    let fit = fit_two_view(&x1, &x2, &params, &config)?;
    prepare_out(&a.out)?;
    let rows: Vec<Vec<Cell>> = report
        .cells
        .iter()
        .map(|c| {
            let ok = c.outcome.as_ref().ok();
            vec![
                Cell::Num(Some(c.gamma.0)),
                Cell::Num(Some(c.gamma.1)),
                Cell::Num(ok.map(|r| r.rho_observed)),
                Cell::Num(ok.map(|r| r.p_value)),
                Cell::Text(ok.map(|r| r.failures.to_string()).unwrap_or_default()),
                Cell::Int(usize::from(c.significant)),
                Cell::Text(c.outcome.as_ref().err().map(|e| e.category().to_string()).unwrap_or_default()),
            ]
        })
        .collect();
    write_records(
        &a.out.join("tune_grid.csv"),
        &["gamma1", "gamma2", "rho_observed", "p_value", "failures", "significant", "error"],
        &rows,
    )?;
    write_fit(&a.out, &[&x1, &x2], &fit)?;
    write_summary(
        &a.out,
        &json!({
            "command": "tune",
            "seed": config.seed,
            "config": {
                "fit": config,
                "gamma_grid": grid,
                "perms": a.perms,
                "alpha": a.alpha,
                "standardize": standardize,
                "x1": a.input.x1,
                "x2": a.input.x2,
            },
            "selected": { "gamma1": g1, "gamma2": g2, "index": report.selected_index },
            "result": fit_json(&fit),
        }),
    )
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let config = SimConfig {
        sigma1: a.sigma1,
        sigma2: a.sigma2,
        ..SimConfig::new(a.n, a.p, a.sigma, a.seed)
    };
    let inst = generate_views(&config)?;
    prepare_out(&a.out)?;
    write_plain(&a.out.join("X1.csv"), &inst.x1.feature_names, &inst.x1.data)?;
    write_plain(&a.out.join("X2.csv"), &inst.x2.feature_names, &inst.x2.data)?;
    for (i, pair) in inst.truth.vectors.iter().enumerate() {
        let names = inst.x1.feature_names.clone();
        let mut m = ndarray::Array2::zeros((a.p, 2));
        m.column_mut(0).assign(&pair[0]);
        m.column_mut(1).assign(&pair[1]);
        let cols = vec![format!("v{}1", i + 1), format!("v{}2", i + 1)];
        write_labeled(&a.out.join(format!("V{}_truth.csv", i + 1)), &names, &cols, &m)?;
    }
    write_summary(
        &a.out,
        &json!({
            "command": "simulate",
            "seed": a.seed,
            "config": config,
            "sigma_ratio": inst.sigma_ratio,
        }),
    )
}

fn run_sweep(a: &SweepArgs) -> Result<()> {
    let fit = a.solver.config(2)?;
    let grid = parse_sigma_grid(&a.sigma_grid)?;
    let base = SimConfig {
        sigma1: a.sigma1,
        sigma2: a.sigma2,
        ..SimConfig::new(a.n, a.p, grid[0], a.solver.seed)
    };
    base.validate()?;
    let est = SweepEstimator::new(
        fit,
        PenaltyHeuristic {
            keep: a.keep,
            ..PenaltyHeuristic::default()
        },
    );
    let table = sweep_sigma(&base, &grid, a.reps, &est, a.window)?;
    prepare_out(&a.out)?;
    let raw: Vec<Vec<Cell>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                Cell::Int(r.sigma_index),
                Cell::Int(r.rep),
                Cell::Num(Some(r.sigma)),
                Cell::Num(r.sigma_ratio),
                Cell::Num(r.truth_corr_1),
                Cell::Num(r.truth_corr_2),
                Cell::Num(r.within_corr),
                Cell::Text(r.error.clone().unwrap_or_default()),
            ]
        })
        .collect();
    write_records(
        &a.out.join("sweep_raw.csv"),
        &["sigma_index", "rep", "sigma", "sigma_ratio", "truth_corr_1", "truth_corr_2", "within_corr", "error"],
        &raw,
    )?;
    let med: Vec<Vec<Cell>> = table
        .medians
        .iter()
        .map(|m| {
            vec![
                Cell::Num(Some(m.sigma_ratio)),
                Cell::Num(m.truth_corr_1),
                Cell::Num(m.truth_corr_2),
                Cell::Num(m.within_corr),
            ]
        })
        .collect();
    write_records(
        &a.out.join("sweep_median.csv"),
        &["sigma_ratio", "truth_corr_1", "truth_corr_2", "within_corr"],
        &med,
    )?;
    let trend = |f: fn(&crate::simgen::MedianRow) -> Option<f64>| {
        let (x, y): (Vec<f64>, Vec<f64>) = table
            .medians
            .iter()
            .filter_map(|m| f(m).map(|v| (m.sigma_ratio, v)))
            .unzip();
        spearman(&x, &y)
    };
    write_summary(
        &a.out,
        &json!({
            "command": "sweep",
            "seed": a.solver.seed,
            "config": {
                "base": base,
                "sigma_grid": grid,
                "reps": a.reps,
                "window": a.window,
                "estimator": est,
            },
            "failed_cells": table.rows.iter().filter(|r| r.error.is_some()).count(),
            "trend": {
                "truth_corr_1": trend(|m| m.truth_corr_1),
                "truth_corr_2": trend(|m| m.truth_corr_2),
            },
        }),
    )
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => run_fit(a),
        Command::FitMulti(a) => run_multi(a),
        Command::FitDirected(a) => run_directed(a),
        Command::Tune(a) => run_tune(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Sweep(a) => run_sweep(a),
    }
}

/// Parses the process arguments, runs, and returns the exit status.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.to_string().replace('\n', " "));
            1
        }
    }
}
