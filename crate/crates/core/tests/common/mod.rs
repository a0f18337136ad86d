#![allow(dead_code)]

use mtlrrc::{Family, MultiTaskData, TaskDataset};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Tasks whose true coefficients are `centers[m % centers.len()]`, with an
/// optional list of tasks shifted by `shift`.
pub fn clustered(
    seed: u64,
    family: Family,
    n: usize,
    centers: &[Vec<f64>],
    t: usize,
    outliers: &[usize],
    shift: f64,
    noise: f64,
) -> (MultiTaskData<f64>, Array2<f64>) {
    let mut r = rng(seed);
    let p = centers[0].len();
    let mut truth = Array2::zeros((t, p));
    let mut tasks = Vec::new();
    for m in 0..t {
        let mut w: Vec<f64> = centers[m % centers.len()].clone();
        if outliers.contains(&m) {
            for v in w.iter_mut() {
                *v += shift;
            }
        }
        let x = Array2::from_shape_fn((n, p), |_| normal(&mut r));
        let eta: Array1<f64> = x.dot(&Array1::from(w.clone()));
        let y: Array1<f64> = match family {
            Family::Gaussian => eta.mapv(|e| e + noise * normal(&mut r)),
            Family::Bernoulli => eta.mapv(|e| {
                let pr = 1.0 / (1.0 + (-e).exp());
                if r.random::<f64>() < pr {
                    1.0
                } else {
                    0.0
                }
            }),
        };
        truth.row_mut(m).assign(&Array1::from(w));
        tasks.push(TaskDataset::new(x, y, family).unwrap());
    }
    (MultiTaskData::new(tasks).unwrap(), truth)
}

/// Small random instance with loosely clustered coefficients.
pub fn random_instance(
    seed: u64,
    family: Family,
    t: usize,
    p: usize,
    n: usize,
) -> MultiTaskData<f64> {
    let mut r = rng(seed ^ 0x9e37_79b9);
    let centers: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..p).map(|_| 1.5 * normal(&mut r)).collect())
        .collect();
    clustered(seed, family, n, &centers, t, &[t - 1], 3.0, 0.5).0
}
