use super::engine::CentroidProblem;
use super::{
    check_problem, objective, outlier_step, CoefficientStep, FitResult, HyperParams, ModelParams,
    SolverOptions,
};
use crate::data::MultiTaskData;
use crate::error::Result;
use crate::linalg::{max_abs_diff, sup_norm};
use crate::scalar::Real;
use crate::taskgraph::TaskGraph;

/// Block coordinate descent: exact minimization over `(w₀, W)`, then `U`
/// (a convex clustering of the rows of `W − O`), then `O`. Stops when no
/// entry of `w₀`, `W`, `U` or `O` moves by more than `opts.tol`.
pub fn fit_bcd<T: Real>(
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
        let old = params.clone();
        coef.update(&mut params)?;
        let target = &params.w - &params.o;
        let problem = CentroidProblem::new(graph, target.view(), hp.lambda1, hp.lambda2, hp.nu)?;
        let mut s = std::mem::take(&mut params.s);
        problem.solve(&mut params.u, &mut s, &opts.centroid)?;
        params.s = s;
        outlier_step(&mut params, hp);
        trace.push(objective(data, &params, graph, hp)?);

        let change = max_abs_diff(params.w.view(), old.w.view())
            .max(max_abs_diff(params.u.view(), old.u.view()))
            .max(max_abs_diff(params.o.view(), old.o.view()))
            .max(sup_norm((&params.w0 - &old.w0).into_iter()));
        if change <= opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "block coordinate descent stopped at {} sweeps before reaching tol = {}",
            opts.max_outer,
            opts.tol
        );
    }
    FitResult::assemble(data, graph, *hp, params, trace, iters, converged, opts)
}
