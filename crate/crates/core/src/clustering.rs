//! Robust regularized clustering
//!
//! ```text
//! min_{U,O} Σ_i ½‖x_i − u_i − o_i‖² + λ₁ Σ_E r‖u_a − u_b‖ + Σ_i P(o_i; λ₂, γ)
//! ```
//!
//! by alternating a convex-clustering U-step with a row-wise thresholding
//! O-step, plus the first-order residuals used to certify fitted points.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{norm2, pinv_symmetric, sup_norm};
use crate::penalty::PenaltySpec;
use crate::scalar::Real;
use crate::solver::engine::{edge_gaps, CentroidOptions, CentroidProblem};
use crate::taskgraph::{fused_norm_unchecked, TaskGraph};

#[derive(Clone, Copy, Debug)]
pub struct RrcOptions<T> {
    /// Sweeps stop when no entry of `U` or `O` moves by more than `tol`.
    pub tol: T,
    pub max_sweeps: usize,
    pub nu: T,
    pub centroid: CentroidOptions<T>,
}

impl<T: Real> Default for RrcOptions<T> {
    fn default() -> Self {
        RrcOptions {
            tol: T::lit(1e-8),
            max_sweeps: 1000,
            nu: T::one(),
            centroid: CentroidOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RccState<T> {
    pub u: Array2<T>,
    pub o: Array2<T>,
    /// Objective at the start and after every sweep.
    pub objective_trace: Vec<T>,
    pub sweeps: usize,
}

pub fn rrc_objective<T: Real>(
    x: ArrayView2<'_, T>,
    u: ArrayView2<'_, T>,
    o: ArrayView2<'_, T>,
    graph: &TaskGraph<T>,
    lambda1: T,
    penalty: &PenaltySpec<T>,
) -> Result<T> {
    if u.dim() != x.dim() || o.dim() != x.dim() || x.nrows() != graph.n_tasks() {
        return Err(Error::shape("X, U, O and the graph must agree in shape"));
    }
    let half = T::lit(0.5);
    let mut total = T::zero();
    for ((&xv, &uv), &ov) in x.iter().zip(u.iter()).zip(o.iter()) {
        total += half * (xv - uv - ov) * (xv - uv - ov);
    }
    total += lambda1 * fused_norm_unchecked(u, graph);
    for row in o.rows() {
        total += penalty.penalty_radial(norm2(row));
    }
    Ok(total)
}

/// Block coordinate descent from `U = X`, `O = 0`.
pub fn solve_rrc<T: Real>(
    x: ArrayView2<'_, T>,
    graph: &TaskGraph<T>,
    lambda1: T,
    penalty: &PenaltySpec<T>,
    opts: &RrcOptions<T>,
) -> Result<RccState<T>> {
    penalty.validate()?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("X has non-finite entries"));
    }
    let mut u = x.to_owned();
    let mut o = Array2::zeros(x.dim());
    solve_rrc_from(x, graph, lambda1, penalty, opts, &mut u, &mut o)
}

/// Block coordinate descent from the given `U` and `O`.
pub fn solve_rrc_from<T: Real>(
    x: ArrayView2<'_, T>,
    graph: &TaskGraph<T>,
    lambda1: T,
    penalty: &PenaltySpec<T>,
    opts: &RrcOptions<T>,
    u: &mut Array2<T>,
    o: &mut Array2<T>,
) -> Result<RccState<T>> {
    penalty.validate()?;
    let mut trace = vec![rrc_objective(
        x,
        u.view(),
        o.view(),
        graph,
        lambda1,
        penalty,
    )?];
    let mut s = Array2::zeros((graph.n_edges(), x.ncols()));
    let mut last = T::infinity();
    for sweep in 1..=opts.max_sweeps {
        let u_old = u.clone();
        let o_old = o.clone();
        let target = &x - &*o;
        let problem = CentroidProblem::new(graph, target.view(), T::one(), lambda1, opts.nu)?;
        problem.solve(u, &mut s, &opts.centroid)?;
        o.assign(&(&x - &*u));
        for row in o.axis_iter_mut(Axis(0)) {
            penalty.threshold_in_place(row);
        }
        trace.push(rrc_objective(
            x,
            u.view(),
            o.view(),
            graph,
            lambda1,
            penalty,
        )?);
        last = crate::linalg::max_abs_diff(u.view(), u_old.view())
            .max(crate::linalg::max_abs_diff(o.view(), o_old.view()));
        if last <= opts.tol {
            return Ok(RccState {
                u: u.clone(),
                o: o.clone(),
                objective_trace: trace,
                sweeps: sweep,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_sweeps,
        last_change: last.as_f64(),
        last_iterate: u.iter().map(|v| v.as_f64()).collect(),
        trace: trace.iter().map(|v| v.as_f64()).collect(),
    })
}

/// Residual of `−Ψ(X − Û) + λ₁ ∂‖D vec(Û)‖_{2,1} ∋ 0`.
pub fn check_stationarity_rrc<T: Real>(
    x: ArrayView2<'_, T>,
    state: &RccState<T>,
    graph: &TaskGraph<T>,
    lambda1: T,
    penalty: &PenaltySpec<T>,
) -> Result<T> {
    if state.u.dim() != x.dim() {
        return Err(Error::shape("state does not match X"));
    }
    let mut score = &x - &state.u;
    for mut row in score.axis_iter_mut(Axis(0)) {
        let z = row.to_owned();
        let c = penalty.shrink_factor(norm2(z.view()));
        row.zip_mut_with(&z, |v, &t| *v = t - c * t);
    }
    fused_subgradient_residual(score.view(), state.u.view(), graph, lambda1)
}

/// `min_Z sup|λ A_Eᵀ Z − G|` over admissible subgradients of the fusion
/// norm at `U`: `z_e = r_e·(u_a − u_b)/‖u_a − u_b‖` on separated edges, and
/// `‖z_e‖ ≤ r_e` on fused edges, where the fused blocks come from the
/// least-squares fit (projected onto the balls when the least-norm solution
/// is infeasible). An edge counts as fused when its gap is at most
/// `1e−6·(1 + max|U|)`.
pub fn fused_subgradient_residual<T: Real>(
    g: ArrayView2<'_, T>,
    u: ArrayView2<'_, T>,
    graph: &TaskGraph<T>,
    lambda: T,
) -> Result<T> {
    if g.dim() != u.dim() || u.nrows() != graph.n_tasks() {
        return Err(Error::shape(
            "gradient, centroids and graph must agree in shape",
        ));
    }
    if lambda == T::zero() || graph.n_edges() == 0 {
        return Ok(sup_norm(g.iter().copied()));
    }
    let p = u.ncols();
    let fuse_tol = T::lit(1e-6) * (T::one() + sup_norm(u.iter().copied()));
    let gaps = edge_gaps(u, graph);
    let mut rest = g.to_owned();
    let mut fused = Vec::new();
    for (e, (edge, &gap)) in graph.edges().iter().zip(&gaps).enumerate() {
        if gap <= fuse_tol {
            fused.push(e);
            continue;
        }
        let c = lambda * edge.weight / gap;
        for j in 0..p {
            let d = c * (u[[edge.source, j]] - u[[edge.target, j]]);
            rest[[edge.source, j]] -= d;
            rest[[edge.target, j]] += d;
        }
    }
    if fused.is_empty() {
        return Ok(sup_norm(rest.iter().copied()));
    }

    let edges = graph.edges();
    let nf = fused.len();
    let mut gram = Array2::<T>::zeros((nf, nf));
    for (i, &ei) in fused.iter().enumerate() {
        for (j, &ej) in fused.iter().enumerate() {
            let (a, b) = (edges[ei].source, edges[ei].target);
            let (c, d) = (edges[ej].source, edges[ej].target);
            let sign = |x: usize| -> T {
                if x == c {
                    T::one()
                } else if x == d {
                    -T::one()
                } else {
                    T::zero()
                }
            };
            gram[[i, j]] = sign(a) - sign(b);
        }
    }
    let mut rhs = Array2::<T>::zeros((nf, p));
    for (i, &e) in fused.iter().enumerate() {
        let (a, b) = (edges[e].source, edges[e].target);
        for j in 0..p {
            rhs[[i, j]] = rest[[a, j]] - rest[[b, j]];
        }
    }
    let (pinv, _) = pinv_symmetric(gram.view(), T::lit(1e-10));
    let mut z = pinv.dot(&rhs);
    let radius: Vec<T> = fused.iter().map(|&e| lambda * edges[e].weight).collect();

    let residual = |z: &Array2<T>| -> Array2<T> {
        let mut r = rest.mapv(|v| -v);
        for (i, &e) in fused.iter().enumerate() {
            let (a, b) = (edges[e].source, edges[e].target);
            for j in 0..p {
                r[[a, j]] += z[[i, j]];
                r[[b, j]] -= z[[i, j]];
            }
        }
        r
    };
    let slack = T::one() + T::lit(1e-9);
    let feasible = z
        .rows()
        .into_iter()
        .zip(&radius)
        .all(|(row, &rad)| norm2(row) <= rad * slack);
    if feasible {
        return Ok(sup_norm(residual(&z).iter().copied()));
    }

    // Projected accelerated gradient on ½‖A_Fᵀ Z − G‖².
    let project = |z: &mut Array2<T>| {
        for (row, &rad) in z.axis_iter_mut(Axis(0)).zip(&radius) {
            crate::penalty::project_ball(row, rad);
        }
    };
    project(&mut z);
    let top = gram
        .rows()
        .into_iter()
        .map(|r| r.iter().fold(T::zero(), |acc, &v| acc + v.abs()))
        .fold(T::zero(), T::max);
    let step = T::one() / top.max(T::one());
    let mut prev = z.clone();
    let mut y = z.clone();
    let mut alpha = T::one();
    let tol = T::lit(1e-14) * (T::one() + sup_norm(g.iter().copied()));
    for _ in 0..50_000 {
        let r = residual(&y);
        let mut grad = Array2::<T>::zeros((nf, p));
        for (i, &e) in fused.iter().enumerate() {
            let (a, b) = (edges[e].source, edges[e].target);
            for j in 0..p {
                grad[[i, j]] = r[[a, j]] - r[[b, j]];
            }
        }
        let mut next = &y - &grad.mapv(|v| v * step);
        project(&mut next);
        let change = crate::linalg::max_abs_diff(next.view(), prev.view());
        let alpha_next = (T::one() + (T::one() + T::lit(4.0) * alpha * alpha).sqrt()) * T::lit(0.5);
        let beta = (alpha - T::one()) / alpha_next;
        y = &next + &(&next - &prev).mapv(|v| v * beta);
        prev = next;
        alpha = alpha_next;
        if change <= tol {
            break;
        }
    }
    Ok(sup_norm(residual(&prev).iter().copied()))
}

/// Connected components of `{(a, b) ∈ E : ‖u_a − u_b‖ ≤ 1e−4·(1 + ‖u_a‖)}`,
/// labelled `0, 1, …` in order of first appearance.
pub fn cluster_labels<T: Real>(u: ArrayView2<'_, T>, graph: &TaskGraph<T>) -> Vec<usize> {
    let n = u.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for edge in graph.edges() {
        let a = u.row(edge.source);
        let gap = norm2((&a - &u.row(edge.target)).view());
        if gap <= T::lit(1e-4) * (T::one() + norm2(a)) {
            let ra = find(&mut parent, edge.source);
            let rb = find(&mut parent, edge.target);
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut next = 0;
    (0..n)
        .map(|i| {
            let r = find(&mut parent, i);
            if label_of_root[r] == usize::MAX {
                label_of_root[r] = next;
                next += 1;
            }
            label_of_root[r]
        })
        .collect()
}
