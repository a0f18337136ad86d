//! The MTLRRC estimator
//!
//! ```text
//! min Σ_m (1/n_m)L_m(w_m0, w_m) + (λ₁/2)‖W − U − O‖² + λ₂ Σ_E r‖u_a − u_b‖
//!     + λ₁ Σ_m P(o_m; λ₃/λ₁, γ)
//! ```
//!
//! fitted either by the modified ADMM ([`fit_admm`]) or by exact block
//! coordinate descent ([`fit_bcd`]). The outlier penalty carries the factor
//! `λ₁` so that its group-lasso instance is `λ₃‖o_m‖` and the O-step is the
//! thresholding `Θ(w_m − u_m; λ₃/λ₁, γ)`.

mod admm;
mod bcd;
pub mod engine;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::Serialize;

pub use admm::fit_admm;
pub use bcd::fit_bcd;
pub use engine::{CentroidOptions, CentroidProblem};

use crate::clustering::{cluster_labels, fused_subgradient_residual};
use crate::data::{fit_stl, MultiTaskData};
use crate::error::{Error, Result};
use crate::glm::{
    loss, mean_loss_gradient, newton_raphson_from, GaussianRidge, NewtonOptions, TaskCoef,
};
use crate::linalg::sup_norm;
use crate::penalty::{PenaltyFamily, PenaltySpec};
use crate::scalar::Real;
use crate::taskgraph::{fused_norm_unchecked, TaskGraph};

/// Regularization weights. `penalty.lambda` is λ₃ and may be `+∞`, which
/// pins `O` to zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperParams<T> {
    pub lambda1: T,
    pub lambda2: T,
    pub penalty: PenaltySpec<T>,
    pub nu: T,
    pub k: usize,
}

impl<T: Real> HyperParams<T> {
    pub fn new(lambda1: T, lambda2: T, penalty: PenaltySpec<T>, nu: T, k: usize) -> Result<Self> {
        let hp = HyperParams {
            lambda1,
            lambda2,
            penalty,
            nu,
            k,
        };
        hp.validate()?;
        Ok(hp)
    }

    /// Family default γ, ν = 1 and k = 5.
    pub fn with_family(family: PenaltyFamily, lambda1: T, lambda2: T, lambda3: T) -> Result<Self> {
        let penalty = PenaltySpec::new(family, lambda3, T::lit(family.default_gamma()))?;
        Self::new(lambda1, lambda2, penalty, T::one(), 5)
    }

    pub fn lambda3(&self) -> T {
        self.penalty.lambda
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= T::zero()) || !self.lambda1.is_finite() {
            return Err(Error::invalid(format!(
                "lambda1 must be finite and >= 0, got {}",
                self.lambda1
            )));
        }
        if !(self.lambda2 >= T::zero()) || !self.lambda2.is_finite() {
            return Err(Error::invalid(format!(
                "lambda2 must be finite and >= 0, got {}",
                self.lambda2
            )));
        }
        if !(self.nu > T::zero()) || !self.nu.is_finite() {
            return Err(Error::invalid(format!("nu must be > 0, got {}", self.nu)));
        }
        self.penalty.validate()?;
        let l3 = self.lambda3();
        if self.lambda1 == T::zero() && l3 > T::zero() && l3.is_finite() {
            return Err(Error::invalid(
                "lambda1 = 0 with a finite lambda3 > 0 leaves the outlier threshold lambda3/lambda1 undefined",
            ));
        }
        Ok(())
    }

    /// Thresholding rule of the O-step, `Θ(·; λ₃/λ₁, γ)`. `None` when `O`
    /// is identically zero (λ₁ = 0 or λ₃ = ∞).
    pub fn outlier_threshold(&self) -> Option<PenaltySpec<T>> {
        let l3 = self.lambda3();
        if self.lambda1 == T::zero() || l3 == T::infinity() {
            None
        } else {
            Some(self.penalty.with_lambda(l3 / self.lambda1))
        }
    }
}

/// Iteration controls shared by both fitting algorithms.
#[derive(Clone, Copy, Debug)]
pub struct SolverOptions<T> {
    /// Outer stop: relative Frobenius change of `w₀`, `W`, `U` and `O`.
    pub tol: T,
    pub max_outer: usize,
    pub centroid: CentroidOptions<T>,
    pub newton: NewtonOptions<T>,
    /// Compute stationarity residuals of the returned point.
    pub stationarity: bool,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            tol: T::lit(1e-6),
            max_outer: 500,
            centroid: CentroidOptions::default(),
            newton: NewtonOptions::default(),
            stationarity: true,
        }
    }
}

/// Iterate of either algorithm. `s` has one row per graph edge.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub w0: Array1<T>,
    pub w: Array2<T>,
    pub u: Array2<T>,
    pub o: Array2<T>,
    pub s: Array2<T>,
}

impl<T: Real> ModelParams<T> {
    /// `W = U = w`, `O = 0`, `S = 0`.
    pub fn from_coefficients(w0: Array1<T>, w: Array2<T>, n_edges: usize) -> Self {
        let (t, p) = w.dim();
        ModelParams {
            w0,
            u: w.clone(),
            w,
            o: Array2::zeros((t, p)),
            s: Array2::zeros((n_edges, p)),
        }
    }

    /// Single-task ridge fits as the starting point.
    pub fn from_stl(
        data: &MultiTaskData<T>,
        graph: &TaskGraph<T>,
        ridge: T,
        opts: &NewtonOptions<T>,
    ) -> Result<Self> {
        let (w0, w) = fit_stl(data, ridge, opts)?;
        Ok(Self::from_coefficients(w0, w, graph.n_edges()))
    }

    pub fn check(&self, n_tasks: usize, p: usize, n_edges: usize) -> Result<()> {
        let tp = (n_tasks, p);
        if self.w0.len() != n_tasks
            || self.w.dim() != tp
            || self.u.dim() != tp
            || self.o.dim() != tp
            || self.s.dim() != (n_edges, p)
        {
            return Err(Error::shape(format!(
                "parameters must be {n_tasks} x {p} with a {n_edges} x {p} dual"
            )));
        }
        Ok(())
    }

    pub fn task_coef(&self, m: usize) -> TaskCoef<T> {
        TaskCoef {
            intercept: self.w0[m],
            coef: self.w.row(m).to_owned(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stationarity<T> {
    pub regression: T,
    pub clustering: T,
}

#[derive(Clone, Debug)]
pub struct FitResult<T> {
    pub params: ModelParams<T>,
    pub hyper: HyperParams<T>,
    /// Objective at the starting point followed by one value per outer
    /// iteration.
    pub objective_trace: Vec<T>,
    pub outer_iters: usize,
    pub converged: bool,
    pub stationarity: Option<Stationarity<T>>,
    pub outlier_tasks: Vec<usize>,
    pub cluster_labels: Vec<usize>,
}

impl<T: Real> FitResult<T> {
    pub(crate) fn assemble(
        data: &MultiTaskData<T>,
        graph: &TaskGraph<T>,
        hyper: HyperParams<T>,
        params: ModelParams<T>,
        objective_trace: Vec<T>,
        outer_iters: usize,
        converged: bool,
        opts: &SolverOptions<T>,
    ) -> Result<Self> {
        let stationarity = if opts.stationarity {
            let (r, c) = stationarity_of(data, &params, graph, &hyper)?;
            Some(Stationarity {
                regression: r,
                clustering: c,
            })
        } else {
            None
        };
        Ok(FitResult {
            outlier_tasks: outlier_tasks(params.o.view()),
            cluster_labels: cluster_labels(params.u.view(), graph),
            params,
            hyper,
            objective_trace,
            outer_iters,
            converged,
            stationarity,
        })
    }

    pub fn objective(&self) -> T {
        *self
            .objective_trace
            .last()
            .expect("trace holds the initial value")
    }

    pub fn report(&self) -> FitReport {
        let mat = |m: &Array2<T>| -> Vec<Vec<f64>> {
            m.rows()
                .into_iter()
                .map(|r| r.iter().map(|v| v.as_f64()).collect())
                .collect()
        };
        FitReport {
            penalty: self.hyper.penalty.family.code().to_string(),
            lambda1: self.hyper.lambda1.as_f64(),
            lambda2: self.hyper.lambda2.as_f64(),
            lambda3: ReportNumber::from(self.hyper.lambda3().as_f64()),
            gamma: self.hyper.penalty.gamma.as_f64(),
            nu: self.hyper.nu.as_f64(),
            k: self.hyper.k,
            converged: self.converged,
            outer_iters: self.outer_iters,
            objective: self.objective().as_f64(),
            objective_trace: self.objective_trace.iter().map(|v| v.as_f64()).collect(),
            stationarity: self.stationarity.map(|s| Stationarity {
                regression: s.regression.as_f64(),
                clustering: s.clustering.as_f64(),
            }),
            outlier_tasks: self.outlier_tasks.clone(),
            cluster_labels: self.cluster_labels.clone(),
            w0: self.params.w0.iter().map(|v| v.as_f64()).collect(),
            w: mat(&self.params.w),
            u: mat(&self.params.u),
            o: mat(&self.params.o),
        }
    }
}

/// A float that serializes as a JSON number when finite and as `"inf"`,
/// `"-inf"` or `"nan"` otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportNumber(pub f64);

impl From<f64> for ReportNumber {
    fn from(v: f64) -> Self {
        ReportNumber(v)
    }
}

impl Serialize for ReportNumber {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

/// JSON shape of a fit; field order is the serialization order.
#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub penalty: String,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: ReportNumber,
    pub gamma: f64,
    pub nu: f64,
    pub k: usize,
    pub converged: bool,
    pub outer_iters: usize,
    pub objective: f64,
    pub objective_trace: Vec<f64>,
    pub stationarity: Option<Stationarity<f64>>,
    pub outlier_tasks: Vec<usize>,
    pub cluster_labels: Vec<usize>,
    pub w0: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub o: Vec<Vec<f64>>,
}

/// Tasks whose outlier vector has any nonzero entry.
pub fn outlier_tasks<T: Real>(o: ArrayView2<'_, T>) -> Vec<usize> {
    o.rows()
        .into_iter()
        .enumerate()
        .filter(|(_, r)| r.iter().any(|&v| v != T::zero()))
        .map(|(m, _)| m)
        .collect()
}

fn check_problem<T: Real>(
    data: &MultiTaskData<T>,
    graph: &TaskGraph<T>,
    hp: &HyperParams<T>,
    params: &ModelParams<T>,
) -> Result<()> {
    if graph.n_tasks() != data.n_tasks() {
        return Err(Error::shape(format!(
            "graph has {} tasks but the data has {}",
            graph.n_tasks(),
            data.n_tasks()
        )));
    }
    hp.validate()?;
    params.check(data.n_tasks(), data.n_features(), graph.n_edges())
}

fn mean_losses<T: Real>(data: &MultiTaskData<T>, params: &ModelParams<T>) -> Result<T> {
    let mut total = T::zero();
    for (m, task) in data.tasks().iter().enumerate() {
        let l = loss(task, &params.task_coef(m)).map_err(|e| e.in_task(m))?;
        total += l / T::lit(task.n_samples() as f64);
    }
    Ok(total)
}

/// Objective with the outlier matrix explicit.
pub fn objective<T: Real>(
    data: &MultiTaskData<T>,
    params: &ModelParams<T>,
    graph: &TaskGraph<T>,
    hp: &HyperParams<T>,
) -> Result<T> {
    check_problem(data, graph, hp, params)?;
    let mut total = mean_losses(data, params)?;
    let half = T::lit(0.5);
    let mut gap = T::zero();
    for ((&w, &u), &o) in params.w.iter().zip(params.u.iter()).zip(params.o.iter()) {
        gap += (w - u - o) * (w - u - o);
    }
    total += half * hp.lambda1 * gap;
    total += hp.lambda2 * fused_norm_unchecked(params.u.view(), graph);
    match hp.outlier_threshold() {
        Some(spec) => {
            for row in params.o.rows() {
                total += hp.lambda1 * spec.penalty_radial(crate::linalg::norm2(row));
            }
        }
        None => {
            if params.o.iter().any(|&v| v != T::zero()) {
                return Ok(T::infinity());
            }
        }
    }
    Ok(total)
}

/// Objective with `O` minimized out: `Σ(1/n)L + λ₁ Σ e(w_m − u_m) + λ₂·fused`,
/// where `e` is the envelope `min_o ½‖z − o‖² + P(o; λ₃/λ₁, γ)`. For the
/// group lasso `e` is the multivariate Huber function. `params.o` is
/// ignored.
pub fn objective_without_outliers<T: Real>(
    data: &MultiTaskData<T>,
    params: &ModelParams<T>,
    graph: &TaskGraph<T>,
    hp: &HyperParams<T>,
) -> Result<T> {
    check_problem(data, graph, hp, params)?;
    let mut total = mean_losses(data, params)?;
    let half = T::lit(0.5);
    let d = &params.w - &params.u;
    for row in d.rows() {
        let t = crate::linalg::norm2(row);
        let env = match hp.outlier_threshold() {
            None => half * t * t,
            Some(spec) if spec.family == PenaltyFamily::MultiTukey => {
                // The reported Tukey loss is normalized to saturate at 1.
                spec.robust_loss_radial(t) * spec.lambda * spec.lambda / T::lit(6.0)
            }
            Some(spec) => spec.robust_loss_radial(t),
        };
        total += hp.lambda1 * env;
    }
    total += hp.lambda2 * fused_norm_unchecked(params.u.view(), graph);
    Ok(total)
}

/// Residuals of the two first-order conditions at `(ŵ₀, Ŵ, Û)`:
/// the per-task condition `∇(1/n)L + λ₁(0, ψ(ŵ − û))` (sup-norm, max over
/// tasks) and the clustering condition `−λ₁Ψ(Ŵ − Û) + λ₂ A_Eᵀ Z` minimized
/// over admissible subgradients `Z`.
pub fn check_stationarity_mtlrrc<T: Real>(
    data: &MultiTaskData<T>,
    result: &FitResult<T>,
    graph: &TaskGraph<T>,
    hp: &HyperParams<T>,
) -> Result<(T, T)> {
    stationarity_of(data, &result.params, graph, hp)
}

pub(crate) fn stationarity_of<T: Real>(
    data: &MultiTaskData<T>,
    params: &ModelParams<T>,
    graph: &TaskGraph<T>,
    hp: &HyperParams<T>,
) -> Result<(T, T)> {
    check_problem(data, graph, hp, params)?;
    let spec = hp.outlier_threshold();
    let mut score = &params.w - &params.u;
    if let Some(spec) = spec {
        for mut row in score.axis_iter_mut(Axis(0)) {
            let theta = row.to_owned();
            let c = spec.shrink_factor(crate::linalg::norm2(theta.view()));
            row.zip_mut_with(&theta, |v, &t| *v = t - c * t);
        }
    }
    let mut regression = T::zero();
    for (m, task) in data.tasks().iter().enumerate() {
        let g = mean_loss_gradient(task, &params.task_coef(m)).map_err(|e| e.in_task(m))?;
        let srow = score.row(m);
        let r = g
            .coef
            .iter()
            .zip(srow.iter())
            .map(|(&gv, &sv)| gv + hp.lambda1 * sv);
        regression = regression.max(sup_norm(r)).max(g.intercept.abs());
    }
    let target = score.mapv(|v| v * hp.lambda1);
    let clustering = fused_subgradient_residual(target.view(), params.u.view(), graph, hp.lambda2)?;
    Ok((regression, clustering))
}

/// Exact `(w₀, W)` block update given `U` and `O`.
pub(crate) struct CoefficientStep<'a, T> {
    data: &'a MultiTaskData<T>,
    lambda1: T,
    gaussian: Option<Vec<GaussianRidge<T>>>,
    newton: NewtonOptions<T>,
}

impl<'a, T: Real> CoefficientStep<'a, T> {
    pub(crate) fn new(
        data: &'a MultiTaskData<T>,
        lambda1: T,
        newton: NewtonOptions<T>,
    ) -> Result<Self> {
        let gaussian = match data.family() {
            crate::glm::Family::Gaussian => Some(
                data.tasks()
                    .iter()
                    .enumerate()
                    .map(|(m, t)| GaussianRidge::new(t, lambda1).map_err(|e| e.in_task(m)))
                    .collect::<Result<Vec<_>>>()?,
            ),
            crate::glm::Family::Bernoulli => None,
        };
        Ok(CoefficientStep {
            data,
            lambda1,
            gaussian,
            newton,
        })
    }

    pub(crate) fn update(&self, params: &mut ModelParams<T>) -> Result<()> {
        let center = &params.u + &params.o;
        match &self.gaussian {
            Some(cache) => {
                for (m, ridge) in cache.iter().enumerate() {
                    let c = ridge.solve(center.row(m));
                    params.w.row_mut(m).assign(&c.coef);
                    params.w0[m] = c.intercept;
                }
            }
            None => {
                let zero = Array1::<T>::zeros(self.data.n_features());
                let fits: Vec<TaskCoef<T>> = self
                    .data
                    .tasks()
                    .par_iter()
                    .enumerate()
                    .map(|(m, t)| {
                        let start = params.task_coef(m);
                        newton_raphson_from(
                            t,
                            center.row(m),
                            zero.view(),
                            self.lambda1,
                            &self.newton,
                            start,
                        )
                        .map(|o| o.coef)
                        .map_err(|e| e.in_task(m))
                    })
                    .collect::<Result<_>>()?;
                for (m, c) in fits.into_iter().enumerate() {
                    params.w.row_mut(m).assign(&c.coef);
                    params.w0[m] = c.intercept;
                }
            }
        }
        Ok(())
    }
}

/// `o_m ← Θ(w_m − u_m; λ₃/λ₁, γ)`, or zero when the outlier block is off.
pub(crate) fn outlier_step<T: Real>(params: &mut ModelParams<T>, hp: &HyperParams<T>) {
    match hp.outlier_threshold() {
        None => params.o.fill(T::zero()),
        Some(spec) => {
            params.o.assign(&(&params.w - &params.u));
            for row in params.o.axis_iter_mut(Axis(0)) {
                spec.threshold_in_place(row);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyperparameter_validation() {
        let gl = PenaltySpec::group_lasso(1.0).unwrap();
        assert!(HyperParams::new(0.0, 1.0, gl, 1.0, 5).is_err());
        assert!(HyperParams::new(1.0, -1.0, gl, 1.0, 5).is_err());
        assert!(HyperParams::new(1.0, 1.0, gl, 0.0, 5).is_err());
        let off = PenaltySpec::group_lasso(f64::INFINITY).unwrap();
        let hp = HyperParams::new(0.0, 1.0, off, 1.0, 5).unwrap();
        assert!(hp.outlier_threshold().is_none());
        let hp = HyperParams::new(2.0, 1.0, gl, 1.0, 5).unwrap();
        assert_eq!(hp.outlier_threshold().unwrap().lambda, 0.5);
    }

    #[test]
    fn report_writes_infinite_lambda_as_string() {
        let json = serde_json::to_string(&ReportNumber(f64::INFINITY)).unwrap();
        assert_eq!(json, "\"inf\"");
        assert_eq!(serde_json::to_string(&ReportNumber(0.25)).unwrap(), "0.25");
    }
}
