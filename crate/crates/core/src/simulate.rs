//! Synthetic multi-task regression data with cluster-structured
//! coefficients and planted outlier tasks, plus per-task sample splitting.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::MultiTaskData;
use crate::error::{Error, Result};
use crate::glm::{Family, TaskDataset};
use crate::scalar::Real;

/// Outlier regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// Outlier tasks keep their cluster center and add a large offset on
    /// the cluster's features.
    Case1,
    /// Outlier tasks are uniform noise on every feature.
    Case2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_tasks: usize,
    pub n_features: usize,
    pub n_clusters: usize,
    pub n_samples: usize,
    pub sigma2: f64,
    pub kappa: f64,
    pub case: Case,
    pub sigma_o2: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_tasks: 150,
            n_features: 100,
            n_clusters: 3,
            n_samples: 200,
            sigma2: 5.0,
            kappa: 0.1,
            case: Case::Case1,
            sigma_o2: 1.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tasks == 0 || self.n_features == 0 || self.n_samples == 0 || self.n_clusters == 0
        {
            return Err(Error::invalid(
                "tasks, features, samples and clusters must be positive",
            ));
        }
        if self.n_tasks % self.n_clusters != 0 {
            return Err(Error::invalid(format!(
                "{} tasks cannot be split evenly into {} clusters",
                self.n_tasks, self.n_clusters
            )));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::invalid(format!(
                "kappa must lie in [0, 1], got {}",
                self.kappa
            )));
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::invalid(format!(
                "sigma2 must be >= 0, got {}",
                self.sigma2
            )));
        }
        if !(self.sigma_o2 > 0.0) || !self.sigma_o2.is_finite() {
            return Err(Error::invalid(format!(
                "sigma_o2 must be > 0, got {}",
                self.sigma_o2
            )));
        }
        Ok(())
    }
}

/// True parameters behind a simulated dataset. Clusters are 0-based.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth<T> {
    pub w_true: Array2<T>,
    pub cluster_of: Vec<usize>,
    pub is_outlier: Vec<bool>,
    pub u_true: Array2<T>,
    /// Task-specific parts `v_m` (zero rows for Case 2 outliers).
    pub v_true: Array2<T>,
    /// Planted outlier parameters (zero rows for regular tasks).
    pub o_true: Array2<T>,
    /// Cluster owning each feature.
    pub feature_cluster: Vec<usize>,
}

/// Draw from `½·TN(−∞, −3; −3, σ²) + ½·TN(3, ∞; 3, σ²)`. Each half is a
/// normal truncated at its own mean, i.e. `±(3 + σ|Z|)`, sampled through
/// the half-normal inverse CDF.
pub fn sample_truncated_mixture<R: Rng + ?Sized>(rng: &mut R, sigma_o: f64) -> f64 {
    let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
    let u: f64 = rng.random();
    let half_normal = std::f64::consts::SQRT_2 * statrs::function::erf::erf_inv(u);
    sign * (3.0 + sigma_o * half_normal)
}

/// Gaussian tasks `y_m = X_m w*_m + ε_m` with `X_m ~ N(0, I)` and
/// `ε ~ N(0, σ²)`. Tasks `0..T/C` form cluster 0, the next block cluster 1,
/// and so on.
pub fn generate<T: Real>(cfg: &SimConfig) -> Result<(MultiTaskData<T>, GroundTruth<T>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (t, p, c) = (cfg.n_tasks, cfg.n_features, cfg.n_clusters);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let feature_cluster: Vec<usize> = (0..p).map(|_| rng.random_range(0..c)).collect();
    let mut u_true = Array2::<f64>::zeros((c, p));
    for j in 0..p {
        u_true[[feature_cluster[j], j]] = 10.0 * normal(&mut rng);
    }

    let per_cluster = t / c;
    let sigma_o = cfg.sigma_o2.sqrt();
    let sigma = cfg.sigma2.sqrt();
    let mut w_true = Array2::<f64>::zeros((t, p));
    let mut v_true = Array2::<f64>::zeros((t, p));
    let mut o_true = Array2::<f64>::zeros((t, p));
    let mut cluster_of = Vec::with_capacity(t);
    let mut is_outlier = Vec::with_capacity(t);
    let mut tasks = Vec::with_capacity(t);
    for m in 0..t {
        let cl = m / per_cluster;
        let outlier = rng.random::<f64>() < cfg.kappa;
        for j in 0..p {
            if feature_cluster[j] == cl {
                v_true[[m, j]] = normal(&mut rng);
            }
        }
        let mut w = &u_true.row(cl) + &v_true.row(m);
        if outlier {
            match cfg.case {
                Case::Case1 => {
                    for j in 0..p {
                        if feature_cluster[j] == cl {
                            o_true[[m, j]] = sample_truncated_mixture(&mut rng, sigma_o);
                        }
                    }
                    w += &o_true.row(m);
                }
                Case::Case2 => {
                    for j in 0..p {
                        o_true[[m, j]] = rng.random_range(-10.0..10.0);
                    }
                    v_true.row_mut(m).fill(0.0);
                    w.assign(&o_true.row(m));
                }
            }
        }
        let x = Array2::from_shape_fn((cfg.n_samples, p), |_| normal(&mut rng));
        let mut y = x.dot(&w);
        for v in y.iter_mut() {
            *v += sigma * normal(&mut rng);
        }
        w_true.row_mut(m).assign(&w);
        cluster_of.push(cl);
        is_outlier.push(outlier);
        tasks.push(TaskDataset::new(
            x.mapv(T::lit),
            y.mapv(T::lit),
            Family::Gaussian,
        )?);
    }
    let truth = GroundTruth {
        w_true: w_true.mapv(T::lit),
        cluster_of,
        is_outlier,
        u_true: u_true.mapv(T::lit),
        v_true: v_true.mapv(T::lit),
        o_true: o_true.mapv(T::lit),
        feature_cluster,
    };
    Ok((MultiTaskData::new(tasks)?, truth))
}

/// Noiseless responses `X_m w*_m`.
pub fn noiseless_response<T: Real>(data: &MultiTaskData<T>, w_true: &Array2<T>) -> Vec<Array1<T>> {
    data.tasks()
        .iter()
        .enumerate()
        .map(|(m, t)| t.x.dot(&w_true.row(m)))
        .collect()
}

/// Sizes of the train / validation / test parts of every task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    /// Exact sample counts; the test part must fit in what remains.
    Counts(usize, usize, usize),
    /// Fractions summing to one; train and validation round down, test
    /// takes the rest.
    Ratios(f64, f64, f64),
}

impl SplitSpec {
    fn sizes(&self, n: usize) -> Result<[usize; 3]> {
        match *self {
            SplitSpec::Counts(a, b, c) => {
                if a + b + c > n {
                    return Err(Error::invalid(format!(
                        "split counts ({a}, {b}, {c}) exceed the {n} available samples"
                    )));
                }
                Ok([a, b, c])
            }
            SplitSpec::Ratios(a, b, c) => {
                if [a, b, c].iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
                    return Err(Error::invalid("split ratios must be non-negative"));
                }
                if ((a + b + c) - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "split ratios must sum to 1, got {}",
                        a + b + c
                    )));
                }
                let ta = (a * n as f64 + 1e-9).floor() as usize;
                let tb = ((b * n as f64 + 1e-9).floor() as usize).min(n - ta);
                let tc = if c > 0.0 { n - ta - tb } else { 0 };
                Ok([ta, tb, tc])
            }
        }
    }
}

/// Disjoint per-task `[train, validation, test]` index sets. Task `m` is
/// shuffled with its own stream, so adding tasks leaves earlier splits
/// unchanged.
pub fn split_indices(sizes: &[usize], spec: &SplitSpec, seed: u64) -> Result<Vec<[Vec<usize>; 3]>> {
    sizes
        .iter()
        .enumerate()
        .map(|(m, &n)| {
            let [a, b, c] = spec.sizes(n).map_err(|e| e.in_task(m))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(m as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            Ok([
                idx[..a].to_vec(),
                idx[a..a + b].to_vec(),
                idx[a + b..a + b + c].to_vec(),
            ])
        })
        .collect()
}

/// The three parts of a split. A part that is empty for every task is
/// `None`.
#[derive(Clone, Debug)]
pub struct Split<T> {
    pub train: MultiTaskData<T>,
    pub validation: Option<MultiTaskData<T>>,
    pub test: Option<MultiTaskData<T>>,
    pub indices: Vec<[Vec<usize>; 3]>,
}

pub fn split<T: Real>(data: &MultiTaskData<T>, spec: &SplitSpec, seed: u64) -> Result<Split<T>> {
    let sizes: Vec<usize> = data.tasks().iter().map(|t| t.n_samples()).collect();
    let indices = split_indices(&sizes, spec, seed)?;
    let part = |k: usize| -> Result<Option<MultiTaskData<T>>> {
        let rows: Vec<Vec<usize>> = indices.iter().map(|s| s[k].clone()).collect();
        if rows.iter().all(|r| r.is_empty()) {
            Ok(None)
        } else {
            data.select_rows(&rows).map(Some)
        }
    };
    let train = part(0)?.ok_or_else(|| Error::invalid("the training split is empty"))?;
    Ok(Split {
        train,
        validation: part(1)?,
        test: part(2)?,
        indices,
    })
}
