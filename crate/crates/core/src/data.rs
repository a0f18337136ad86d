//! Multi-task sample container, standardization, and single-task fits.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{newton_raphson, Family, NewtonOptions, TaskCoef, TaskDataset};
use crate::scalar::Real;

/// `T` task datasets sharing one feature schema and one response family.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiTaskData<T> {
    tasks: Vec<TaskDataset<T>>,
    family: Family,
    n_features: usize,
}

impl<T: Real> MultiTaskData<T> {
    pub fn new(tasks: Vec<TaskDataset<T>>) -> Result<Self> {
        let first = tasks
            .first()
            .ok_or_else(|| Error::invalid("at least one task is required"))?;
        let family = first.family;
        let n_features = first.n_features();
        for (m, t) in tasks.iter().enumerate() {
            if t.family != family {
                return Err(Error::invalid(format!(
                    "task {m} has family {:?}, expected {family:?}",
                    t.family
                )));
            }
            if t.n_features() != n_features {
                return Err(Error::shape(format!(
                    "task {m} has {} features, expected {n_features}",
                    t.n_features()
                )));
            }
            if t.n_samples() == 0 {
                return Err(Error::invalid(format!("task {m} is empty")));
            }
        }
        Ok(MultiTaskData {
            tasks,
            family,
            n_features,
        })
    }

    pub fn tasks(&self) -> &[TaskDataset<T>] {
        &self.tasks
    }

    pub fn task(&self, m: usize) -> &TaskDataset<T> {
        &self.tasks[m]
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn total_samples(&self) -> usize {
        self.tasks.iter().map(|t| t.n_samples()).sum()
    }

    /// Row subset of every task; `rows[m]` lists the sample indices kept for
    /// task `m`.
    pub fn select_rows(&self, rows: &[Vec<usize>]) -> Result<Self> {
        if rows.len() != self.n_tasks() {
            return Err(Error::shape("one index list per task is required"));
        }
        let tasks = self
            .tasks
            .iter()
            .zip(rows)
            .map(|(t, idx)| TaskDataset {
                x: t.x.select(Axis(0), idx),
                y: t.y.select(Axis(0), idx),
                family: t.family,
            })
            .collect();
        MultiTaskData::new(tasks)
    }
}

/// Per-task standardization fitted on one split and applied to others:
/// feature columns to mean 0 / variance 1 (population variance), Gaussian
/// responses to mean 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<Vec<f64>>,
    pub x_scale: Vec<Vec<f64>>,
    pub y_mean: Vec<f64>,
}

impl Standardizer {
    pub fn fit<T: Real>(data: &MultiTaskData<T>) -> Self {
        let mut x_mean = Vec::new();
        let mut x_scale = Vec::new();
        let mut y_mean = Vec::new();
        for t in data.tasks() {
            let n = t.n_samples() as f64;
            let mut means = Vec::with_capacity(t.n_features());
            let mut scales = Vec::with_capacity(t.n_features());
            for col in t.x.axis_iter(Axis(1)) {
                let mean = col.iter().map(|v| v.as_f64()).sum::<f64>() / n;
                let var = col.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                means.push(mean);
                scales.push(if sd > 0.0 { sd } else { 1.0 });
            }
            x_mean.push(means);
            x_scale.push(scales);
            y_mean.push(match t.family {
                Family::Gaussian => t.y.iter().map(|v| v.as_f64()).sum::<f64>() / n,
                Family::Bernoulli => 0.0,
            });
        }
        Standardizer {
            x_mean,
            x_scale,
            y_mean,
        }
    }

    pub fn apply<T: Real>(&self, data: &MultiTaskData<T>) -> Result<MultiTaskData<T>> {
        if data.n_tasks() != self.y_mean.len() {
            return Err(Error::shape(
                "standardizer fitted on a different task count",
            ));
        }
        let tasks = data
            .tasks()
            .iter()
            .enumerate()
            .map(|(m, t)| {
                let mut x = t.x.clone();
                for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
                    let mu = T::lit(self.x_mean[m][j]);
                    let sd = T::lit(self.x_scale[m][j]);
                    col.mapv_inplace(|v| (v - mu) / sd);
                }
                let ym = T::lit(self.y_mean[m]);
                let y = t.y.mapv(|v| v - ym);
                TaskDataset {
                    x,
                    y,
                    family: t.family,
                }
            })
            .collect();
        MultiTaskData::new(tasks)
    }

    /// Maps coefficients fitted on the standardized scale back to the raw
    /// feature scale (raw intercept absorbs the centring).
    pub fn coef_to_raw<T: Real>(&self, m: usize, c: &TaskCoef<T>) -> TaskCoef<T> {
        let coef: Array1<T> = c
            .coef
            .iter()
            .enumerate()
            .map(|(j, &w)| w / T::lit(self.x_scale[m][j]))
            .collect();
        let shift: T = coef
            .iter()
            .enumerate()
            .map(|(j, &w)| w * T::lit(self.x_mean[m][j]))
            .sum();
        TaskCoef {
            intercept: c.intercept + T::lit(self.y_mean[m]) - shift,
            coef,
        }
    }
}

/// Single-task ridge fits `argmin (1/n)L + (ridge/2)‖w‖²`, one per task.
/// Returns the intercept vector and the `T × p` coefficient matrix.
pub fn fit_stl<T: Real>(
    data: &MultiTaskData<T>,
    ridge: T,
    opts: &NewtonOptions<T>,
) -> Result<(Array1<T>, Array2<T>)> {
    let p = data.n_features();
    let zero = Array1::<T>::zeros(p);
    let fits: Vec<TaskCoef<T>> = data
        .tasks()
        .par_iter()
        .enumerate()
        .map(|(m, t)| {
            newton_raphson(t, zero.view(), zero.view(), ridge, opts)
                .map(|o| o.coef)
                .map_err(|e| e.in_task(m))
        })
        .collect::<Result<_>>()?;
    let mut w = Array2::zeros((data.n_tasks(), p));
    let mut w0 = Array1::zeros(data.n_tasks());
    for (m, c) in fits.into_iter().enumerate() {
        w.row_mut(m).assign(&c.coef);
        w0[m] = c.intercept;
    }
    Ok((w0, w))
}
