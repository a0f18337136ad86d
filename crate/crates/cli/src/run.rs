//! Mode drivers. Each writes its resolved configuration next to its
//! results.

use std::fs::File;
use std::io::BufWriter;

use mtlrrc::evaluate::{auc, nmse_per_task};
use mtlrrc::io::{write_ground_truth, write_json, write_matrix_file, write_tasks};
use mtlrrc::solver::Stationarity;
use mtlrrc::{check_stationarity_mtlrrc, generate, Family};
use ndarray::Array1;
use serde::Serialize;

use crate::bench::{bench, raw_coefficients, settings, with_workers, write_bench};
use crate::config::{Mode, RunConfig};
use crate::error::{CliError, CliResult};
use crate::grid::{grid_search, validation_loss, write_table, GridSpec};
use crate::ingest::{ingest, prepare};

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate()?;
    write_json(&cfg.out.join("config.json"), cfg)?;
    match cfg.mode {
        Mode::Fit => with_workers(cfg.workers, || fit(cfg))?,
        Mode::Simulate => simulate(cfg),
        Mode::Bench => {
            let out = bench(cfg)?;
            write_bench(&cfg.out, cfg, &out)
        }
    }
}

pub fn simulate(cfg: &RunConfig) -> CliResult<()> {
    let (data, truth) = generate::<f64>(&cfg.sim_config())?;
    write_tasks(&cfg.out.join("data"), &data)?;
    write_ground_truth(&cfg.out.join("truth.json"), &truth)?;
    Ok(())
}

#[derive(Serialize)]
struct TestMetrics {
    feature_names: Vec<String>,
    validation_loss: f64,
    test_loss: Option<f64>,
    /// Gaussian tasks: per-task NMSE of the observed test responses.
    test_nmse: Option<f64>,
    test_nmse_per_task: Vec<f64>,
    /// Bernoulli tasks: pooled AUC of the test linear predictors.
    test_auc: Option<f64>,
    stationarity: Stationarity<f64>,
}

pub fn fit(cfg: &RunConfig) -> CliResult<()> {
    let dir = cfg.data_dir.as_ref().ok_or_else(|| CliError::config("fit needs a data directory"))?;
    let (data, names) = ingest(dir)?;
    let prep = prepare(&data, &cfg.split, cfg.seed)?;
    let s = settings(cfg, cfg.penalty);
    let grid = GridSpec {
        lambda1: cfg.lambda1.clone(),
        lambda2: cfg.lambda2.clone(),
        lambda3: cfg.lambda3.clone(),
    };
    let mut out = grid_search(&prep.train, &prep.validation, &s, &grid)?;
    let (r, c) = check_stationarity_mtlrrc(&prep.train, &out.fit, &out.graph, &out.best)?;
    out.fit.stationarity = Some(Stationarity {
        regression: r,
        clustering: c,
    });

    let o = &cfg.out;
    write_json(&o.join("fit.json"), &out.fit.report())?;
    write_json(&o.join("standardizer.json"), &prep.standardizer)?;
    write_json(&o.join("splits.json"), &prep.indices)?;
    write_table(&o.join("grid.csv"), &out.table)?;
    let params = &out.fit.params;
    write_matrix_file(&o.join("W.csv"), params.w.view())?;
    write_matrix_file(&o.join("U.csv"), params.u.view())?;
    write_matrix_file(&o.join("O.csv"), params.o.view())?;
    let (b, w_raw) = raw_coefficients(&prep.standardizer, &params.w0, &params.w);
    write_matrix_file(&o.join("W_raw.csv"), w_raw.view())?;
    write_json(&o.join("intercept_raw.json"), &b.to_vec())?;
    let path = o.join("graph.csv");
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    out.graph
        .write_csv(BufWriter::new(file))
        .map_err(|e| CliError::io(&path, e))?;

    let mut metrics = TestMetrics {
        feature_names: names,
        validation_loss: validation_loss(&prep.validation, params),
        test_loss: None,
        test_nmse: None,
        test_nmse_per_task: Vec::new(),
        test_auc: None,
        stationarity: Stationarity {
            regression: r,
            clustering: c,
        },
    };
    if let (Some(test), Some(raw)) = (&prep.test, &prep.raw_test) {
        if test.tasks().iter().all(|t| t.n_samples() > 0) {
            metrics.test_loss = Some(validation_loss(test, params));
        }
        match data.family() {
            Family::Gaussian => {
                let y: Vec<Array1<f64>> =
                    raw.tasks().iter().enumerate().map(|(m, t)| &t.y - b[m]).collect();
                let x: Vec<_> = raw.tasks().iter().map(|t| t.x.clone()).collect();
                match nmse_per_task(&y, &x, w_raw.view()) {
                    Ok(per) => {
                        metrics.test_nmse = Some(per.iter().sum::<f64>() / per.len() as f64);
                        metrics.test_nmse_per_task = per;
                    }
                    Err(e) => log::warn!("test NMSE unavailable: {e}"),
                }
            }
            Family::Bernoulli => {
                let mut scores = Vec::new();
                let mut labels = Vec::new();
                for (m, t) in test.tasks().iter().enumerate() {
                    let eta = t.x.dot(&params.w.row(m)) + params.w0[m];
                    scores.extend(eta.iter().copied());
                    labels.extend(t.y.iter().map(|&v| v == 1.0));
                }
                match auc(&scores, &labels) {
                    Ok(v) => metrics.test_auc = Some(v),
                    Err(e) => log::warn!("test AUC unavailable: {e}"),
                }
            }
        }
    }
    write_json(&o.join("metrics.json"), &metrics)?;
    log::info!(
        "selected lambda1 {} lambda2 {} lambda3 {} ({} outlier tasks)",
        out.best.lambda1,
        out.best.lambda2,
        out.best.lambda3(),
        out.fit.outlier_tasks.len()
    );
    Ok(())
}
