//! Prediction, recovery and detection metrics, and the Hotelling-style
//! baseline outlier detector.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, pinv_symmetric};
use crate::scalar::Real;

/// Per-task `‖y*_m − X_m ŵ_m‖² / (n_m·Var(y*_m))` with the population
/// variance.
pub fn nmse_per_task<T: Real>(
    y_true: &[Array1<T>],
    x: &[Array2<T>],
    w_hat: ArrayView2<'_, T>,
) -> Result<Vec<T>> {
    if y_true.len() != x.len() || x.len() != w_hat.nrows() {
        return Err(Error::shape(
            "one response, design and coefficient row per task",
        ));
    }
    y_true
        .iter()
        .zip(x)
        .enumerate()
        .map(|(m, (y, xm))| {
            if xm.nrows() != y.len() || xm.ncols() != w_hat.ncols() {
                return Err(Error::shape(format!("task {m} has inconsistent shapes")));
            }
            let n = T::lit(y.len() as f64);
            let mean = y.sum() / n;
            let var = y.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            if !(var > T::zero()) {
                return Err(Error::ZeroVariance { task: m });
            }
            let pred = xm.dot(&w_hat.row(m));
            let sse: T = y
                .iter()
                .zip(pred.iter())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            Ok(sse / (n * var))
        })
        .collect()
}

pub fn nmse<T: Real>(y_true: &[Array1<T>], x: &[Array2<T>], w_hat: ArrayView2<'_, T>) -> Result<T> {
    let per = nmse_per_task(y_true, x, w_hat)?;
    Ok(per.iter().copied().sum::<T>() / T::lit(per.len() as f64))
}

/// `(1/T)·sqrt(Σ_m ‖w*_m − ŵ_m‖²)`.
pub fn rmse<T: Real>(w_true: ArrayView2<'_, T>, w_hat: ArrayView2<'_, T>) -> Result<T> {
    if w_true.dim() != w_hat.dim() {
        return Err(Error::shape("coefficient matrices differ in shape"));
    }
    let ss: T = w_true
        .iter()
        .zip(w_hat.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(ss.sqrt() / T::lit(w_true.nrows() as f64))
}

/// True and false positive rates of the detected set `{m : ô_m ≠ 0}`.
/// A rate is `None` when its denominator is zero.
pub fn outlier_rates<T: Real>(
    is_outlier: &[bool],
    o_hat: ArrayView2<'_, T>,
) -> Result<(Option<f64>, Option<f64>)> {
    if is_outlier.len() != o_hat.nrows() {
        return Err(Error::shape("one outlier flag per task"));
    }
    let detected: Vec<bool> = o_hat
        .rows()
        .into_iter()
        .map(|r| r.iter().any(|&v| v != T::zero()))
        .collect();
    Ok(detection_rates(is_outlier, &detected))
}

/// Rates from explicit detection flags.
pub fn detection_rates(is_outlier: &[bool], detected: &[bool]) -> (Option<f64>, Option<f64>) {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let pos = is_outlier.iter().filter(|&&o| o).count();
    let neg = is_outlier.len() - pos;
    for (&truth, &hit) in is_outlier.iter().zip(detected) {
        if hit && truth {
            tp += 1;
        } else if hit {
            fp += 1;
        }
    }
    let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    (rate(tp, pos), rate(fp, neg))
}

/// Area under the ROC curve as the Mann-Whitney statistic; ties count ½.
pub fn auc<T: Real>(scores: &[T], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("one label per score"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid(
            "AUC needs both positive and negative labels",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("no NaN"));
    // Average ranks over tied blocks.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Quantile of the chi-square distribution with `df` degrees of freedom,
/// by bisection on the regularized lower incomplete gamma function.
pub fn chi_square_quantile(prob: f64, df: usize) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::invalid(format!(
            "probability must lie in (0, 1), got {prob}"
        )));
    }
    if df == 0 {
        return Err(Error::invalid("degrees of freedom must be positive"));
    }
    let a = df as f64 / 2.0;
    let cdf = |x: f64| statrs::function::gamma::gamma_lr(a, x / 2.0);
    let mut lo = 0.0;
    let mut hi = df as f64 + 10.0;
    while cdf(hi) < prob {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Mahalanobis statistics `h_m = (ŵ_m − w̄)ᵀ Σ̄⁻¹ (ŵ_m − w̄)` of the rows of
/// `coefs`, with the unbiased sample covariance. A singular covariance is
/// replaced by its pseudo-inverse and reported with a warning.
pub fn hotelling_statistics<T: Real>(coefs: ArrayView2<'_, T>) -> Result<Vec<f64>> {
    let (t, p) = coefs.dim();
    if t < 2 {
        return Err(Error::invalid(
            "at least two tasks are needed for a covariance",
        ));
    }
    let w = coefs.mapv(|v| v.as_f64());
    let mean = w.mean_axis(Axis(0)).expect("non-empty");
    let centered = &w - &mean;
    let cov = centered.t().dot(&centered) / (t as f64 - 1.0);
    let solve: Box<dyn Fn(&Array1<f64>) -> Array1<f64>> = match cholesky(cov.view()) {
        Some(l) if t > p => Box::new(move |d: &Array1<f64>| cholesky_solve(&l, d.view())),
        _ => {
            let (pinv, rank) = pinv_symmetric(cov.view(), 1e-10);
            log::warn!(
                "sample covariance of {t} coefficient vectors in dimension {p} is singular \
                 (rank {rank}); using the pseudo-inverse"
            );
            Box::new(move |d: &Array1<f64>| pinv.dot(d))
        }
    };
    Ok(centered
        .rows()
        .into_iter()
        .map(|d| {
            let d = d.to_owned();
            d.dot(&solve(&d))
        })
        .collect())
}

/// Tasks with `h_m` at or above the `level` chi-square quantile with `p`
/// degrees of freedom.
pub fn hmtlk_detect<T: Real>(coefs: ArrayView2<'_, T>, level: f64) -> Result<Vec<usize>> {
    let cut = chi_square_quantile(level, coefs.ncols())?;
    Ok(hotelling_statistics(coefs)?
        .into_iter()
        .enumerate()
        .filter(|(_, h)| *h >= cut)
        .map(|(m, _)| m)
        .collect())
}

/// Metrics of one method on one dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub nmse: Option<f64>,
    pub rmse: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub auc: Option<f64>,
    pub nmse_per_task: Vec<f64>,
    pub detected: Vec<usize>,
}
