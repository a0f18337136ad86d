//! Validation-based selection of `(λ₁, λ₂, λ₃)`.

use std::cmp::Ordering;

use mtlrrc::glm::log1p_exp;
use mtlrrc::solver::ReportNumber;
use mtlrrc::{
    fit_admm, fit_stl, knn_weights, Family, FitResult, HyperParams, ModelParams, MultiTaskData,
    PenaltyFamily, PenaltySpec, SolverOptions, TaskGraph,
};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult, PointFailure};

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub lambda3: Vec<f64>,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.lambda1.len() * self.lambda2.len() * self.lambda3.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn sorted(&self) -> GridSpec {
        let sort = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(|a, b| a.total_cmp(b));
            v.dedup();
            v
        };
        GridSpec {
            lambda1: sort(&self.lambda1),
            lambda2: sort(&self.lambda2),
            lambda3: sort(&self.lambda3),
        }
    }
}

/// Everything except the grid that a search needs.
#[derive(Clone, Debug)]
pub struct SearchSettings {
    pub penalty: PenaltyFamily,
    pub gamma: f64,
    pub k: usize,
    pub nu: f64,
    pub stl_ridge: f64,
    pub solver: SolverOptions<f64>,
}

/// One row of the grid table.
#[derive(Clone, Debug, Serialize)]
pub struct GridRow {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: ReportNumber,
    pub validation_loss: Option<f64>,
    pub objective: Option<f64>,
    pub outer_iters: usize,
    pub converged: bool,
    pub n_outliers: usize,
    pub n_clusters: usize,
    pub outlier_tasks: Vec<usize>,
    pub error: Option<String>,
}

pub struct SearchOutcome {
    pub best: HyperParams<f64>,
    pub fit: FitResult<f64>,
    pub graph: TaskGraph<f64>,
    /// Single-task coefficients behind the graph.
    pub stl: (ndarray::Array1<f64>, Array2<f64>),
    /// Rows in lexicographic `(λ₁, λ₂, λ₃)` order.
    pub table: Vec<GridRow>,
    pub best_index: usize,
}

/// Pooled validation loss: mean squared error for Gaussian tasks, mean
/// deviance for Bernoulli tasks.
pub fn validation_loss(data: &MultiTaskData<f64>, params: &ModelParams<f64>) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (m, t) in data.tasks().iter().enumerate() {
        let eta = t.x.dot(&params.w.row(m)) + params.w0[m];
        for (&e, &y) in eta.iter().zip(t.y.iter()) {
            total += match t.family {
                Family::Gaussian => (y - e) * (y - e),
                Family::Bernoulli => 2.0 * (log1p_exp(e) - y * e),
            };
        }
        count += t.n_samples();
    }
    total / count as f64
}

pub fn graph_from_stl(
    train: &MultiTaskData<f64>,
    settings: &SearchSettings,
) -> CliResult<((ndarray::Array1<f64>, Array2<f64>), TaskGraph<f64>)> {
    let (w0, w) = fit_stl(train, settings.stl_ridge, &settings.solver.newton)?;
    let t = train.n_tasks();
    let k = if settings.k >= t {
        let k = t.saturating_sub(1).max(1);
        log::warn!("k = {} is not below the task count {t}; using k = {k}", settings.k);
        k
    } else {
        settings.k
    };
    let graph = knn_weights(w.view(), k)?;
    Ok(((w0, w), graph))
}

fn hyper(settings: &SearchSettings, l1: f64, l2: f64, l3: f64) -> mtlrrc::Result<HyperParams<f64>> {
    let gamma = if settings.penalty == PenaltyFamily::GroupLasso || settings.penalty == PenaltyFamily::MultiTukey {
        settings.penalty.default_gamma()
    } else {
        settings.gamma
    };
    let pen = PenaltySpec::new(settings.penalty, l3, gamma)?;
    HyperParams::new(l1, l2, pen, settings.nu, settings.k)
}

fn lambda3_text(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "inf".into()
    }
}

/// Fits every grid point on `train`, scores it on `validation` and keeps
/// the best. Each `(λ₁, λ₂)` pair walks its `λ₃` values from largest to
/// smallest, starting every fit from the previous solution.
pub fn grid_search(
    train: &MultiTaskData<f64>,
    validation: &MultiTaskData<f64>,
    settings: &SearchSettings,
    grid: &GridSpec,
) -> CliResult<SearchOutcome> {
    if grid.is_empty() {
        return Err(CliError::config("empty hyperparameter grid"));
    }
    if validation.n_tasks() != train.n_tasks() || validation.tasks().iter().any(|t| t.n_samples() == 0) {
        return Err(CliError::config("every task needs validation samples"));
    }
    let grid = grid.sorted();
    let (stl, graph) = graph_from_stl(train, settings)?;
    let start = ModelParams::from_coefficients(stl.0.clone(), stl.1.clone(), graph.n_edges());
    let pairs: Vec<(f64, f64)> = grid
        .lambda1
        .iter()
        .flat_map(|&a| grid.lambda2.iter().map(move |&b| (a, b)))
        .collect();
    let n3 = grid.lambda3.len();
    let paths: Vec<(Vec<GridRow>, Option<(usize, f64, FitResult<f64>)>)> = pairs
        .par_iter()
        .map(|&(l1, l2)| {
            let mut rows: Vec<Option<GridRow>> = vec![None; n3];
            let mut best: Option<(usize, f64, FitResult<f64>)> = None;
            let mut init = start.clone();
            for j in (0..n3).rev() {
                let l3 = grid.lambda3[j];
                let outcome = hyper(settings, l1, l2, l3)
                    .and_then(|hp| fit_admm(train, &graph, &hp, &settings.solver, &init));
                let row = match outcome {
                    Ok(fit) => {
                        let loss = validation_loss(validation, &fit.params);
                        let n_clusters = fit.cluster_labels.iter().max().map_or(0, |m| m + 1);
                        let row = GridRow {
                            lambda1: l1,
                            lambda2: l2,
                            lambda3: l3.into(),
                            validation_loss: loss.is_finite().then_some(loss),
                            objective: Some(fit.objective()),
                            outer_iters: fit.outer_iters,
                            converged: fit.converged,
                            n_outliers: fit.outlier_tasks.len(),
                            n_clusters,
                            outlier_tasks: fit.outlier_tasks.clone(),
                            error: None,
                        };
                        init = fit.params.clone();
                        if loss.is_finite() && best.as_ref().is_none_or(|b| loss <= b.1) {
                            best = Some((j, loss, fit));
                        }
                        row
                    }
                    Err(e) => GridRow {
                        lambda1: l1,
                        lambda2: l2,
                        lambda3: l3.into(),
                        validation_loss: None,
                        objective: None,
                        outer_iters: 0,
                        converged: false,
                        n_outliers: 0,
                        n_clusters: 0,
                        outlier_tasks: Vec::new(),
                        error: Some(e.to_string()),
                    },
                };
                rows[j] = Some(row);
            }
            (rows.into_iter().map(|r| r.expect("filled")).collect(), best)
        })
        .collect();

    let mut table = Vec::with_capacity(grid.len());
    let mut chosen: Option<(usize, f64, FitResult<f64>)> = None;
    for (i, (rows, best)) in paths.into_iter().enumerate() {
        if let Some((j, loss, fit)) = best {
            let index = i * n3 + j;
            let better = match &chosen {
                None => true,
                Some((ci, cl, _)) => match loss.total_cmp(cl) {
                    Ordering::Less => true,
                    Ordering::Equal => index < *ci,
                    Ordering::Greater => false,
                },
            };
            if better {
                chosen = Some((index, loss, fit));
            }
        }
        table.extend(rows);
    }
    match chosen {
        Some((best_index, _, fit)) => Ok(SearchOutcome {
            best: fit.hyper,
            fit,
            graph,
            stl,
            table,
            best_index,
        }),
        None => Err(CliError::GridFailed(
            table
                .iter()
                .map(|r| PointFailure {
                    lambda1: r.lambda1,
                    lambda2: r.lambda2,
                    lambda3: lambda3_text(r.lambda3.0),
                    message: r.error.clone().unwrap_or_else(|| "non-finite validation loss".into()),
                })
                .collect(),
        )),
    }
}

pub fn write_table(path: &std::path::Path, table: &[GridRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
    w.write_record([
        "lambda1",
        "lambda2",
        "lambda3",
        "validation_loss",
        "objective",
        "outer_iters",
        "converged",
        "n_outliers",
        "n_clusters",
        "outlier_tasks",
        "error",
    ])
    .map_err(|e| CliError::csv(path, e))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in table {
        w.write_record([
            r.lambda1.to_string(),
            r.lambda2.to_string(),
            lambda3_text(r.lambda3.0),
            opt(r.validation_loss),
            opt(r.objective),
            r.outer_iters.to_string(),
            r.converged.to_string(),
            r.n_outliers.to_string(),
            r.n_clusters.to_string(),
            r.outlier_tasks.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(";"),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
