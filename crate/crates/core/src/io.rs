//! On-disk formats.
//!
//! A dataset directory holds one CSV per task (header row, a `y` column,
//! every other column a feature) and an optional `manifest.json`:
//!
//! ```json
//! {"family": "gaussian", "tasks": ["task_000.csv", "task_001.csv"]}
//! ```
//!
//! Without a manifest every `*.csv` file is read in name order as a
//! Gaussian task. Task indices are 0-based everywhere.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::MultiTaskData;
use crate::error::{Error, Result};
use crate::glm::{Family, TaskDataset};
use crate::scalar::Real;
use crate::simulate::GroundTruth;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub family: Family,
    pub tasks: Vec<String>,
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Error {
    let context = context.into();
    move |source| Error::Io { context, source }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Format(format!("{}: {e}", path.display()))
}

/// A task file with its feature names.
fn read_task(path: &Path, family: Family) -> Result<(Vec<String>, TaskDataset<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(String::from)
        .collect();
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::Format(format!("{}: no column named `y`", path.display())))?;
    let features: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != y_col)
        .map(|(_, h)| h.clone())
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        for (i, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Format(format!(
                    "{}: row {}, column `{}`: cannot parse {field:?} as a number",
                    path.display(),
                    row + 1,
                    headers[i]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Format(format!(
                    "{}: row {}, column `{}`: non-finite value",
                    path.display(),
                    row + 1,
                    headers[i]
                )));
            }
            if i == y_col {
                if family == Family::Bernoulli && v != 0.0 && v != 1.0 {
                    return Err(Error::Format(format!(
                        "{}: row {}, column `y`: Bernoulli label must be 0 or 1, found {v}",
                        path.display(),
                        row + 1
                    )));
                }
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    if ys.is_empty() {
        return Err(Error::Format(format!(
            "{}: task has no samples",
            path.display()
        )));
    }
    let x = Array2::from_shape_vec((ys.len(), features.len()), xs)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let task = TaskDataset::new(x, Array1::from(ys), family)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok((features, task))
}

/// Task files and family of a dataset directory.
pub fn read_manifest(dir: &Path) -> Result<(Family, Vec<PathBuf>)> {
    let manifest = dir.join("manifest.json");
    if manifest.exists() {
        let text = fs::read_to_string(&manifest).map_err(io_err(manifest.display().to_string()))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", manifest.display())))?;
        Ok((m.family, m.tasks.iter().map(|t| dir.join(t)).collect()))
    } else {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir.display().to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        files.sort();
        Ok((Family::Gaussian, files))
    }
}

/// Reads and validates every task of a dataset directory.
pub fn read_tasks(dir: &Path) -> Result<(MultiTaskData<f64>, Vec<String>)> {
    let (family, files) = read_manifest(dir)?;
    if files.is_empty() {
        return Err(Error::Format(format!("{}: no task files", dir.display())));
    }
    let mut schema: Option<(PathBuf, Vec<String>)> = None;
    let mut tasks = Vec::with_capacity(files.len());
    for path in &files {
        let (features, task) = read_task(path, family)?;
        match &schema {
            None => schema = Some((path.clone(), features)),
            Some((first, expected)) => {
                if &features != expected {
                    let col = features
                        .iter()
                        .zip(expected)
                        .find(|(a, b)| a != b)
                        .map(|(a, _)| a.clone())
                        .unwrap_or_else(|| format!("<{} columns>", features.len()));
                    return Err(Error::Format(format!(
                        "{}: feature columns differ from {} (first mismatch at `{col}`)",
                        path.display(),
                        first.display()
                    )));
                }
            }
        }
        tasks.push(task);
    }
    let names = schema.map(|(_, f)| f).unwrap_or_default();
    Ok((MultiTaskData::new(tasks)?, names))
}

/// Writes a dataset directory readable by [`read_tasks`]. Values use the
/// shortest representation that round-trips.
pub fn write_tasks<T: Real>(dir: &Path, data: &MultiTaskData<T>) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir.display().to_string()))?;
    let mut names = Vec::with_capacity(data.n_tasks());
    for (m, task) in data.tasks().iter().enumerate() {
        let name = format!("task_{m:03}.csv");
        let path = dir.join(&name);
        let file = File::create(&path).map_err(io_err(path.display().to_string()))?;
        let mut w = BufWriter::new(file);
        let header: Vec<String> = std::iter::once("y".to_string())
            .chain((1..=task.n_features()).map(|j| format!("feature_{j}")))
            .collect();
        writeln!(w, "{}", header.join(",")).map_err(io_err(path.display().to_string()))?;
        for (i, row) in task.x.rows().into_iter().enumerate() {
            let mut line = task.y[i].as_f64().to_string();
            for v in row {
                line.push(',');
                line.push_str(&v.as_f64().to_string());
            }
            writeln!(w, "{line}").map_err(io_err(path.display().to_string()))?;
        }
        w.flush().map_err(io_err(path.display().to_string()))?;
        names.push(name);
    }
    let manifest = Manifest {
        family: data.family(),
        tasks: names,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    fs::write(path, text + "\n").map_err(io_err(path.display().to_string()))
}

/// Row-per-task matrix CSV with header `task,feature_1..feature_p`.
pub fn write_matrix<T: Real, W: Write>(out: W, m: ArrayView2<'_, T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = std::iter::once("task".to_string())
        .chain((1..=m.ncols()).map(|j| format!("feature_{j}")))
        .collect();
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(&header).map_err(fmt)?;
    for (t, row) in m.rows().into_iter().enumerate() {
        let rec: Vec<String> = std::iter::once(t.to_string())
            .chain(row.iter().map(|v| v.as_f64().to_string()))
            .collect();
        w.write_record(&rec).map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_matrix_file<T: Real>(path: &Path, m: ArrayView2<'_, T>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path.display().to_string()))?;
    write_matrix(BufWriter::new(file), m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TruthFile {
    w_true: Vec<Vec<f64>>,
    u_true: Vec<Vec<f64>>,
    v_true: Vec<Vec<f64>>,
    o_true: Vec<Vec<f64>>,
    cluster_of: Vec<usize>,
    is_outlier: Vec<bool>,
    feature_cluster: Vec<usize>,
}

fn rows<T: Real>(m: &Array2<T>) -> Vec<Vec<f64>> {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.as_f64()).collect())
        .collect()
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::Format(format!("ragged `{what}` matrix")));
    }
    Array2::from_shape_vec((rows.len(), p), rows.concat()).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_ground_truth<T: Real>(path: &Path, truth: &GroundTruth<T>) -> Result<()> {
    let file = TruthFile {
        w_true: rows(&truth.w_true),
        u_true: rows(&truth.u_true),
        v_true: rows(&truth.v_true),
        o_true: rows(&truth.o_true),
        cluster_of: truth.cluster_of.clone(),
        is_outlier: truth.is_outlier.clone(),
        feature_cluster: truth.feature_cluster.clone(),
    };
    write_json(path, &file)
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth<f64>> {
    let text = fs::read_to_string(path).map_err(io_err(path.display().to_string()))?;
    let f: TruthFile = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(GroundTruth {
        w_true: matrix(&f.w_true, "w_true")?,
        u_true: matrix(&f.u_true, "u_true")?,
        v_true: matrix(&f.v_true, "v_true")?,
        o_true: matrix(&f.o_true, "o_true")?,
        cluster_of: f.cluster_of,
        is_outlier: f.is_outlier,
        feature_cluster: f.feature_cluster,
    })
}
