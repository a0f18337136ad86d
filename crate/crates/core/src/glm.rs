//! Per-task generalized linear models with canonical links and the
//! proximal-ridge Newton solver used by the coefficient block update.
//!
//! The per-task objective is
//!
//! ```text
//! f(w₀, w) = (1/n)·L(w₀, w) + (λ₁/2)·‖w − u − o‖²
//! ```
//!
//! with the intercept left unpenalised. Gaussian tasks carry no intercept
//! (responses are centred), Bernoulli tasks do. The dispersion is fixed to
//! one for both families.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, sup_norm};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Bernoulli,
}

impl Family {
    pub fn has_intercept(self) -> bool {
        matches!(self, Family::Bernoulli)
    }

    /// Mean `b'(η)` and variance `b''(η)` of the canonical family.
    #[inline]
    fn mean_var<T: Real>(self, eta: T) -> (T, T) {
        match self {
            Family::Gaussian => (eta, T::one()),
            Family::Bernoulli => {
                let mu = sigmoid(eta);
                (mu, mu * (T::one() - mu))
            }
        }
    }
}

#[inline]
fn sigmoid<T: Real>(eta: T) -> T {
    if eta >= T::zero() {
        T::one() / (T::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(η))` without overflow.
#[inline]
pub fn log1p_exp<T: Real>(eta: T) -> T {
    eta.max(T::zero()) + (-eta.abs()).exp().ln_1p()
}

/// One task's design matrix, response and family.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskDataset<T> {
    pub x: Array2<T>,
    pub y: Array1<T>,
    pub family: Family,
}

impl<T: Real> TaskDataset<T> {
    pub fn new(x: Array2<T>, y: Array1<T>, family: Family) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::shape(format!(
                "design has {} rows but response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("task data has non-finite entries"));
        }
        if family == Family::Bernoulli {
            if let Some(bad) = y.iter().find(|&&v| v != T::zero() && v != T::one()) {
                return Err(Error::invalid(format!(
                    "Bernoulli response must be 0 or 1, found {bad}"
                )));
            }
        }
        Ok(TaskDataset { x, y, family })
    }

    pub fn n_samples(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    fn linear_predictor(&self, c: &TaskCoef<T>) -> Array1<T> {
        let mut eta = self.x.dot(&c.coef);
        if self.family.has_intercept() {
            eta.mapv_inplace(|v| v + c.intercept);
        }
        eta
    }
}

/// Intercept and coefficient vector of one task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskCoef<T> {
    pub intercept: T,
    pub coef: Array1<T>,
}

impl<T: Real> TaskCoef<T> {
    pub fn zeros(p: usize) -> Self {
        TaskCoef {
            intercept: T::zero(),
            coef: Array1::zeros(p),
        }
    }
}

fn check_coef<T: Real>(data: &TaskDataset<T>, c: &TaskCoef<T>) -> Result<()> {
    if c.coef.len() != data.n_features() {
        return Err(Error::shape(format!(
            "coefficient vector has length {} but the design has {} columns",
            c.coef.len(),
            data.n_features()
        )));
    }
    Ok(())
}

/// Negative log-likelihood `L(w₀, w)` (not divided by `n`).
pub fn loss<T: Real>(data: &TaskDataset<T>, c: &TaskCoef<T>) -> Result<T> {
    check_coef(data, c)?;
    Ok(loss_unchecked(data, c))
}

fn loss_unchecked<T: Real>(data: &TaskDataset<T>, c: &TaskCoef<T>) -> T {
    let eta = data.linear_predictor(c);
    match data.family {
        Family::Gaussian => {
            let half = T::lit(0.5);
            eta.iter()
                .zip(data.y.iter())
                .map(|(&e, &y)| half * (y - e) * (y - e))
                .sum()
        }
        Family::Bernoulli => eta
            .iter()
            .zip(data.y.iter())
            .map(|(&e, &y)| log1p_exp(e) - y * e)
            .sum(),
    }
}

/// Gradient of `(1/n)·L` with respect to `(w₀, w)`. The intercept entry is
/// zero for Gaussian tasks.
pub fn mean_loss_gradient<T: Real>(data: &TaskDataset<T>, c: &TaskCoef<T>) -> Result<TaskCoef<T>> {
    check_coef(data, c)?;
    let eta = data.linear_predictor(c);
    let n = T::lit(data.n_samples() as f64);
    let resid: Array1<T> = eta
        .iter()
        .zip(data.y.iter())
        .map(|(&e, &y)| data.family.mean_var(e).0 - y)
        .collect();
    let coef = data.x.t().dot(&resid) / n;
    let intercept = if data.family.has_intercept() {
        resid.sum() / n
    } else {
        T::zero()
    };
    Ok(TaskCoef { intercept, coef })
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions<T> {
    /// Convergence when the sup-norm of the accepted step is at most `tol`.
    pub tol: T,
    pub max_iter: usize,
    /// Step halvings tried when a full step increases the objective.
    pub max_halvings: usize,
}

impl<T: Real> Default for NewtonOptions<T> {
    fn default() -> Self {
        NewtonOptions {
            tol: T::lit(1e-8),
            max_iter: 100,
            max_halvings: 30,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome<T> {
    pub coef: TaskCoef<T>,
    pub iterations: usize,
    /// Objective value after each accepted step, starting with the initial
    /// point.
    pub objective_trace: Vec<T>,
}

/// Proximal-ridge objective `(1/n)L + (λ₁/2)‖w − center‖²`.
pub fn ridge_objective<T: Real>(
    data: &TaskDataset<T>,
    c: &TaskCoef<T>,
    center: ArrayView1<'_, T>,
    lambda1: T,
) -> T {
    let n = T::lit(data.n_samples() as f64);
    let pen: T = c
        .coef
        .iter()
        .zip(center.iter())
        .map(|(&w, &m)| (w - m) * (w - m))
        .sum();
    loss_unchecked(data, c) / n + T::lit(0.5) * lambda1 * pen
}

/// Minimises `(1/n)L(w₀, w) + (λ₁/2)‖w − u − o‖²` by Newton-Raphson from
/// the zero vector.
pub fn newton_raphson<T: Real>(
    data: &TaskDataset<T>,
    u: ArrayView1<'_, T>,
    o: ArrayView1<'_, T>,
    lambda1: T,
    opts: &NewtonOptions<T>,
) -> Result<NewtonOutcome<T>> {
    let start = TaskCoef::zeros(data.n_features());
    newton_raphson_from(data, u, o, lambda1, opts, start)
}

/// Newton-Raphson started from `start`.
pub fn newton_raphson_from<T: Real>(
    data: &TaskDataset<T>,
    u: ArrayView1<'_, T>,
    o: ArrayView1<'_, T>,
    lambda1: T,
    opts: &NewtonOptions<T>,
    start: TaskCoef<T>,
) -> Result<NewtonOutcome<T>> {
    let p = data.n_features();
    if u.len() != p || o.len() != p {
        return Err(Error::shape(format!(
            "centroid/outlier vectors must have length {p}"
        )));
    }
    check_coef(data, &start)?;
    if !(lambda1 >= T::zero()) {
        return Err(Error::invalid(format!(
            "lambda1 must be >= 0, got {lambda1}"
        )));
    }
    if !(opts.tol > T::zero()) {
        return Err(Error::invalid("Newton tolerance must be positive"));
    }
    let center = &u + &o;
    let n = T::lit(data.n_samples() as f64);
    let with_icpt = data.family.has_intercept();
    let off = usize::from(with_icpt);
    let dim = p + off;

    let mut cur = start;
    let mut f_cur = ridge_objective(data, &cur, center.view(), lambda1);
    let mut trace = vec![f_cur];
    let mut last_change = T::infinity();

    for iter in 1..=opts.max_iter {
        let eta = data.linear_predictor(&cur);
        let mut resid = Array1::<T>::zeros(data.n_samples());
        let mut var = Array1::<T>::zeros(data.n_samples());
        for i in 0..data.n_samples() {
            let (mu, v) = data.family.mean_var(eta[i]);
            resid[i] = data.y[i] - mu;
            var[i] = v;
        }
        // Gradient of the objective (sign flipped: ascent direction).
        let mut rhs = Array1::<T>::zeros(dim);
        let xr = data.x.t().dot(&resid) / n;
        if with_icpt {
            rhs[0] = resid.sum() / n;
        }
        for j in 0..p {
            rhs[off + j] = xr[j] - lambda1 * (cur.coef[j] - center[j]);
        }
        let hess = weighted_gram(data.x.view(), var.view(), with_icpt, n, lambda1);
        let chol = cholesky(hess.view()).ok_or(Error::SingularSystem { iteration: iter })?;
        let delta = cholesky_solve(&chol, rhs.view());

        let mut step = T::one();
        let mut accepted = None;
        let slack = T::lit(64.0) * T::epsilon() * (T::one() + f_cur.abs());
        for _ in 0..=opts.max_halvings {
            let cand = TaskCoef {
                intercept: if with_icpt {
                    cur.intercept + step * delta[0]
                } else {
                    T::zero()
                },
                coef: Array1::from_shape_fn(p, |j| cur.coef[j] + step * delta[off + j]),
            };
            let f_cand = ridge_objective(data, &cand, center.view(), lambda1);
            if f_cand <= f_cur + slack {
                accepted = Some((cand, f_cand));
                break;
            }
            step = step * T::lit(0.5);
        }
        let (next, f_next) = match accepted {
            Some(v) => v,
            // No descent at machine precision: the current point is as
            // stationary as the arithmetic allows.
            None => {
                return Ok(NewtonOutcome {
                    coef: cur,
                    iterations: iter,
                    objective_trace: trace,
                })
            }
        };
        last_change = sup_norm(delta.iter().map(|&d| d * step));
        cur = next;
        f_cur = f_next;
        trace.push(f_cur);
        if last_change <= opts.tol {
            return Ok(NewtonOutcome {
                coef: cur,
                iterations: iter,
                objective_trace: trace,
            });
        }
    }
    let mut last_iterate = vec![cur.intercept.as_f64()];
    last_iterate.extend(cur.coef.iter().map(|v| v.as_f64()));
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        last_change: last_change.as_f64(),
        last_iterate,
        trace: trace.iter().map(|v| v.as_f64()).collect(),
    })
}

/// `X'ᵀ E X' / n + diag(0, λ₁, …, λ₁)` with `X' = (1, X)` when an intercept
/// is present.
fn weighted_gram<T: Real>(
    x: ArrayView2<'_, T>,
    var: ArrayView1<'_, T>,
    with_icpt: bool,
    n: T,
    lambda1: T,
) -> Array2<T> {
    let p = x.ncols();
    let off = usize::from(with_icpt);
    let dim = p + off;
    let mut h = Array2::<T>::zeros((dim, dim));
    for (row, &v) in x.axis_iter(Axis(0)).zip(var.iter()) {
        if with_icpt {
            h[[0, 0]] += v;
            for j in 0..p {
                h[[0, off + j]] += v * row[j];
            }
        }
        for a in 0..p {
            let va = v * row[a];
            for b in a..p {
                h[[off + a, off + b]] += va * row[b];
            }
        }
    }
    for a in 0..dim {
        for b in a..dim {
            let val = h[[a, b]] / n;
            h[[a, b]] = val;
            h[[b, a]] = val;
        }
    }
    for j in 0..p {
        h[[off + j, off + j]] += lambda1;
    }
    h
}

/// Cached exact solver for a Gaussian task: the Newton step from any start
/// lands on `(XᵀX/n + λ₁I)⁻¹(Xᵀy/n + λ₁·center)`.
#[derive(Clone, Debug)]
pub struct GaussianRidge<T> {
    chol: Array2<T>,
    xty: Array1<T>,
    lambda1: T,
}

impl<T: Real> GaussianRidge<T> {
    pub fn new(data: &TaskDataset<T>, lambda1: T) -> Result<Self> {
        if data.family != Family::Gaussian {
            return Err(Error::invalid("GaussianRidge requires a Gaussian task"));
        }
        let n = T::lit(data.n_samples() as f64);
        let ones = Array1::from_elem(data.n_samples(), T::one());
        let h = weighted_gram(data.x.view(), ones.view(), false, n, lambda1);
        let chol = cholesky(h.view()).ok_or(Error::SingularSystem { iteration: 1 })?;
        let xty = data.x.t().dot(&data.y) / n;
        Ok(GaussianRidge { chol, xty, lambda1 })
    }

    pub fn solve(&self, center: ArrayView1<'_, T>) -> TaskCoef<T> {
        let rhs = &self.xty + &center.mapv(|c| c * self.lambda1);
        TaskCoef {
            intercept: T::zero(),
            coef: cholesky_solve(&self.chol, rhs.view()),
        }
    }
}
