//! Simulation replicates: generate, split, select, evaluate.

use std::path::Path;

use mtlrrc::evaluate::{detection_rates, hmtlk_detect, nmse, rmse};
use mtlrrc::simulate::noiseless_response;
use mtlrrc::{fit_stl, generate, Case, GroundTruth, MultiTaskData, PenaltyFamily, Standardizer, TaskCoef};
use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Method, RunConfig};
use crate::error::{CliError, CliResult};
use crate::grid::{grid_search, GridSpec, SearchSettings};
use crate::ingest::{prepare, Prepared};

/// Metrics of one method on one replicate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub seed: u64,
    pub method: Method,
    pub nmse: f64,
    pub rmse: f64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub n_detected: usize,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Stat {
    /// Mean and sample standard deviation; `None` for no values.
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, sd, n })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub nmse: Option<Stat>,
    pub rmse: Option<Stat>,
    pub tpr: Option<Stat>,
    pub fpr: Option<Stat>,
}

#[derive(Clone, Debug)]
pub struct BenchOutput {
    pub rows: Vec<ReplicateRow>,
    pub summary: Vec<SummaryRow>,
}

pub fn replicate_seed(base: u64, r: usize) -> u64 {
    base.wrapping_add(r as u64)
}

fn split_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> CliResult<R> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn settings(cfg: &RunConfig, penalty: PenaltyFamily) -> SearchSettings {
    let mut solver = mtlrrc::SolverOptions::default();
    solver.tol = cfg.tol;
    solver.max_outer = cfg.max_outer;
    solver.centroid.max_fista = cfg.max_fista;
    solver.stationarity = false;
    SearchSettings {
        penalty,
        gamma: cfg.gamma_for(penalty),
        k: cfg.k,
        nu: cfg.nu,
        stl_ridge: cfg.stl_ridge,
        solver,
    }
}

fn grid(cfg: &RunConfig, robust: bool) -> GridSpec {
    GridSpec {
        lambda1: cfg.lambda1.clone(),
        lambda2: cfg.lambda2.clone(),
        lambda3: if robust {
            cfg.lambda3.clone()
        } else {
            vec![f64::INFINITY]
        },
    }
}

/// Coefficients on the standardized scale plus detection flags.
struct Estimate {
    w0: Array1<f64>,
    w: Array2<f64>,
    detected: Option<Vec<bool>>,
    lambdas: Option<(f64, f64, f64)>,
    converged: bool,
}

fn subset(data: &MultiTaskData<f64>, keep: &[usize]) -> CliResult<MultiTaskData<f64>> {
    Ok(MultiTaskData::new(keep.iter().map(|&m| data.task(m).clone()).collect())?)
}

fn estimate(cfg: &RunConfig, method: Method, prep: &Prepared) -> CliResult<Estimate> {
    match method {
        Method::Hmtlk => hmtlk(cfg, prep),
        _ => {
            let penalty = method.penalty();
            let s = settings(cfg, penalty.unwrap_or(PenaltyFamily::GroupLasso));
            let out = grid_search(&prep.train, &prep.validation, &s, &grid(cfg, penalty.is_some()))?;
            let detected = penalty.map(|_| {
                let mut d = vec![false; prep.train.n_tasks()];
                for &m in &out.fit.outlier_tasks {
                    d[m] = true;
                }
                d
            });
            Ok(Estimate {
                lambdas: Some((out.best.lambda1, out.best.lambda2, out.best.lambda3())),
                converged: out.fit.converged,
                w0: out.fit.params.w0,
                w: out.fit.params.w,
                detected,
            })
        }
    }
}

/// Hotelling screen on single-task fits, then convex clustering on the
/// tasks that pass. Flagged tasks keep their single-task estimates.
fn hmtlk(cfg: &RunConfig, prep: &Prepared) -> CliResult<Estimate> {
    let s = settings(cfg, PenaltyFamily::GroupLasso);
    let (mut w0, mut w) = fit_stl(&prep.train, cfg.stl_ridge, &s.solver.newton)?;
    let raw = raw_coefficients(&prep.standardizer, &w0, &w);
    let flagged = hmtlk_detect(raw.1.view(), cfg.level)?;
    let t = prep.train.n_tasks();
    let mut detected = vec![false; t];
    for &m in &flagged {
        detected[m] = true;
    }
    let keep: Vec<usize> = (0..t).filter(|&m| !detected[m]).collect();
    let mut lambdas = None;
    let mut converged = true;
    if keep.len() >= 2 {
        let train = subset(&prep.train, &keep)?;
        let val = subset(&prep.validation, &keep)?;
        let out = grid_search(&train, &val, &s, &grid(cfg, false))?;
        for (i, &m) in keep.iter().enumerate() {
            w.row_mut(m).assign(&out.fit.params.w.row(i));
            w0[m] = out.fit.params.w0[i];
        }
        lambdas = Some((out.best.lambda1, out.best.lambda2, out.best.lambda3()));
        converged = out.fit.converged;
    }
    Ok(Estimate {
        w0,
        w,
        detected: Some(detected),
        lambdas,
        converged,
    })
}

pub fn raw_coefficients(std: &Standardizer, w0: &Array1<f64>, w: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let mut rw = w.clone();
    let mut rb = w0.clone();
    for m in 0..w.nrows() {
        let c = std.coef_to_raw(
            m,
            &TaskCoef {
                intercept: w0[m],
                coef: w.row(m).to_owned(),
            },
        );
        rw.row_mut(m).assign(&c.coef);
        rb[m] = c.intercept;
    }
    (rb, rw)
}

fn score(
    truth: &GroundTruth<f64>,
    prep: &Prepared,
    est: &Estimate,
    method: Method,
    replicate: usize,
    seed: u64,
) -> CliResult<ReplicateRow> {
    let test = prep
        .raw_test
        .as_ref()
        .ok_or_else(|| CliError::config("the split leaves no test samples"))?;
    let (b, w) = raw_coefficients(&prep.standardizer, &est.w0, &est.w);
    // The intercept is a per-task constant, so subtracting it from the
    // noiseless response leaves the variance unchanged.
    let y: Vec<Array1<f64>> = noiseless_response(test, &truth.w_true)
        .into_iter()
        .enumerate()
        .map(|(m, y)| y - b[m])
        .collect();
    let x: Vec<Array2<f64>> = test.tasks().iter().map(|t| t.x.clone()).collect();
    let (tpr, fpr) = match &est.detected {
        Some(d) => detection_rates(&truth.is_outlier, d),
        None => (None, None),
    };
    Ok(ReplicateRow {
        replicate,
        seed,
        method,
        nmse: nmse(&y, &x, w.view())?,
        rmse: rmse(truth.w_true.view(), w.view())?,
        tpr,
        fpr,
        n_detected: est.detected.as_ref().map_or(0, |d| d.iter().filter(|&&v| v).count()),
        lambda1: est.lambdas.map(|l| l.0),
        lambda2: est.lambdas.map(|l| l.1),
        lambda3: est.lambdas.map(|l| l.2),
        converged: est.converged,
    })
}

pub fn run_replicate(cfg: &RunConfig, replicate: usize) -> CliResult<Vec<ReplicateRow>> {
    let seed = replicate_seed(cfg.seed, replicate);
    let sim = mtlrrc::SimConfig { seed, ..cfg.sim };
    let (data, truth) = generate::<f64>(&sim)?;
    let prep = prepare(&data, &cfg.split, split_seed(seed))?;
    cfg.methods
        .iter()
        .map(|&method| {
            let est = estimate(cfg, method, &prep)?;
            score(&truth, &prep, &est, method, replicate, seed)
        })
        .collect()
}

pub fn summarize(methods: &[Method], rows: &[ReplicateRow]) -> Vec<SummaryRow> {
    methods
        .iter()
        .map(|&method| {
            let mine: Vec<&ReplicateRow> = rows.iter().filter(|r| r.method == method).collect();
            let col = |f: &dyn Fn(&ReplicateRow) -> Option<f64>| {
                Stat::of(&mine.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            SummaryRow {
                method,
                nmse: col(&|r| Some(r.nmse)),
                rmse: col(&|r| Some(r.rmse)),
                tpr: col(&|r| r.tpr),
                fpr: col(&|r| r.fpr),
            }
        })
        .collect()
}

/// All replicates, in parallel up to `cfg.workers`. Rows come back in
/// replicate order, then method order.
pub fn bench(cfg: &RunConfig) -> CliResult<BenchOutput> {
    let rows = with_workers(cfg.workers, || {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                run_replicate(cfg, r).map_err(|e| CliError::Replicate {
                    replicate: r,
                    source: Box::new(e),
                })
            })
            .collect::<CliResult<Vec<Vec<ReplicateRow>>>>()
    })??;
    let rows: Vec<ReplicateRow> = rows.into_iter().flatten().collect();
    let summary = summarize(&cfg.methods, &rows);
    Ok(BenchOutput { rows, summary })
}

fn case_name(c: Case) -> &'static str {
    match c {
        Case::Case1 => "case1",
        Case::Case2 => "case2",
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(number).unwrap_or_default()
}

pub fn number(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Writes `replicates.csv`, `summary.csv` and the aligned `table.txt`.
pub fn write_bench(dir: &Path, cfg: &RunConfig, out: &BenchOutput) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let case = case_name(cfg.sim.case);
    let kappa = cfg.sim.kappa.to_string();

    let path = dir.join("replicates.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::csv(&path, e))?;
    w.write_record([
        "case", "kappa", "replicate", "seed", "method", "nmse", "rmse", "tpr", "fpr", "n_detected",
        "lambda1", "lambda2", "lambda3", "converged",
    ])
    .map_err(|e| CliError::csv(&path, e))?;
    for r in &out.rows {
        w.write_record([
            case.to_string(),
            kappa.clone(),
            r.replicate.to_string(),
            r.seed.to_string(),
            r.method.name().to_string(),
            r.nmse.to_string(),
            r.rmse.to_string(),
            opt(r.tpr),
            opt(r.fpr),
            r.n_detected.to_string(),
            opt(r.lambda1),
            opt(r.lambda2),
            opt(r.lambda3),
            r.converged.to_string(),
        ])
        .map_err(|e| CliError::csv(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::csv(&path, e))?;
    w.write_record([
        "case", "kappa", "method", "n", "nmse_mean", "nmse_sd", "rmse_mean", "rmse_sd", "tpr_mean",
        "tpr_sd", "fpr_mean", "fpr_sd",
    ])
    .map_err(|e| CliError::csv(&path, e))?;
    for s in &out.summary {
        let mut rec = vec![
            case.to_string(),
            kappa.clone(),
            s.method.name().to_string(),
            s.nmse.as_ref().map_or(0, |x| x.n).to_string(),
        ];
        for stat in [&s.nmse, &s.rmse, &s.tpr, &s.fpr] {
            rec.push(opt(stat.as_ref().map(|x| x.mean)));
            rec.push(opt(stat.as_ref().map(|x| x.sd)));
        }
        w.write_record(&rec).map_err(|e| CliError::csv(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = dir.join("table.txt");
    std::fs::write(&path, render_table(cfg, &out.summary)).map_err(|e| CliError::io(&path, e))
}

/// `mean (sd)` table with one row per method. Rates that do not apply to
/// a method print `--`; rates with no defined value print `N/A`.
pub fn render_table(cfg: &RunConfig, summary: &[SummaryRow]) -> String {
    let cell = |s: &Option<Stat>, applies: bool| match (s, applies) {
        (_, false) => "--".to_string(),
        (Some(s), true) => format!("{:.3} ({:.3})", s.mean, s.sd),
        (None, true) => "N/A".to_string(),
    };
    let mut lines = vec![format!(
        "{:<6} {:<11} {:>15} {:>15} {:>15} {:>15}",
        "kappa", "method", "NMSE", "RMSE", "TPR", "FPR"
    )];
    for s in summary {
        let rates = s.method != Method::Mtlcvx;
        lines.push(format!(
            "{:<6} {:<11} {:>15} {:>15} {:>15} {:>15}",
            cfg.sim.kappa,
            s.method.name(),
            cell(&s.nmse, true),
            cell(&s.rmse, true),
            cell(&s.tpr, rates),
            cell(&s.fpr, rates),
        ));
    }
    lines.join("\n") + "\n"
}
