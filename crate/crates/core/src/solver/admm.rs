use ndarray::Axis;

use super::engine::CentroidProblem;
use super::{
    check_problem, objective, outlier_step, CoefficientStep, FitResult, HyperParams, ModelParams,
    SolverOptions,
};
use crate::data::MultiTaskData;
use crate::error::Result;
use crate::linalg::frobenius;
use crate::scalar::Real;
use crate::taskgraph::TaskGraph;

fn relative_change<T: Real>(new: &ndarray::Array2<T>, old: &ndarray::Array2<T>) -> T {
    let d = new - old;
    frobenius(d.view()) / frobenius(old.view()).max(T::one())
}

fn relative_change1<T: Real>(new: &ndarray::Array1<T>, old: &ndarray::Array1<T>) -> T {
    let d = new - old;
    d.dot(&d).sqrt() / old.dot(old).sqrt().max(T::one())
}

/// Modified ADMM: per outer iteration an exact `(w₀, W)` update, one FISTA
/// solve for `U` with the dual fixed, the thresholding O-step and one dual
/// step. Hitting `max_outer` logs a warning and returns the last iterate
/// with `converged = false`.
pub fn fit_admm<T: Real>(
    data: &MultiTaskData<T>,
    graph: &TaskGraph<T>,
    hp: &HyperParams<T>,
    opts: &SolverOptions<T>,
    init: &ModelParams<T>,
) -> Result<FitResult<T>> {
    check_problem(data, graph, hp, init)?;
    let coef = CoefficientStep::new(data, hp.lambda1, opts.newton)?;
    let mut params = init.clone();
    let mut trace = vec![objective(data, &params, graph, hp)?];
    let mut converged = false;
    let mut iters = 0;
    for it in 1..=opts.max_outer {
        iters = it;
        let w0_old = params.w0.clone();
        let w_old = params.w.clone();
        let u_old = params.u.clone();
        let o_old = params.o.clone();
        coef.update(&mut params)?;

        let target = &params.w - &params.o;
        if hp.lambda1 == T::zero() {
            let mean = params.w.mean_axis(Axis(0)).expect("non-empty");
            for mut row in params.u.axis_iter_mut(Axis(0)) {
                row.assign(&mean);
            }
            outlier_step(&mut params, hp);
        } else {
            let problem =
                CentroidProblem::new(graph, target.view(), hp.lambda1, hp.lambda2, hp.nu)?;
            let (u, _, _) = problem.fista(
                params.u.view(),
                params.s.view(),
                opts.centroid.fista_tol,
                opts.centroid.max_fista,
            )?;
            params.u = u;
            outlier_step(&mut params, hp);
            let mut s = std::mem::take(&mut params.s);
            problem.dual_update(params.u.view(), &mut s)?;
            params.s = s;
        }
        trace.push(objective(data, &params, graph, hp)?);

        let change = relative_change(&params.w, &w_old)
            .max(relative_change(&params.u, &u_old))
            .max(relative_change(&params.o, &o_old))
            .max(relative_change1(&params.w0, &w0_old));
        if change <= opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "ADMM stopped at max_outer = {} before reaching tol = {}",
            opts.max_outer,
            opts.tol
        );
    }
    FitResult::assemble(data, graph, *hp, params, trace, iters, converged, opts)
}
