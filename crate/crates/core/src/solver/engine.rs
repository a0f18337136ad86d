//! Centroid subproblem shared by the ADMM fit, the BCD fit and robust
//! regularized clustering.
//!
//! With the split `B = A_E U` eliminated, the augmented Lagrangian restricted
//! to `U` (dual `S` held fixed) is
//!
//! ```text
//! φ₁(U) = (q/2)‖T − U‖² + Σ_e min_b { f r_e‖b‖ + s_eᵀ(Δ_e U − b) + (ν/2)‖b − Δ_e U‖² }
//! ```
//!
//! where `T` is the target (`W − O`), `q` the quadratic weight and `f` the
//! fusion weight. The inner minimum is a scaled Huber function of
//! `Δ_e U + s_e/ν`, so `φ₁` is smooth with gradient
//! `q(U − T) + A_Eᵀ proj(S + ν A_E U, f r)`.

use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis, Zip};

use crate::error::{Error, Result};
use crate::linalg::{max_abs_diff, norm2};
use crate::penalty::project_ball;
use crate::scalar::Real;
use crate::taskgraph::{
    incidence_into, incidence_transpose_into, lipschitz_step_scaled, TaskGraph,
};

/// Inner iteration limits for the centroid solvers.
#[derive(Clone, Copy, Debug)]
pub struct CentroidOptions<T> {
    /// FISTA stops when the sup-norm change of the iterate is at most this.
    pub fista_tol: T,
    pub max_fista: usize,
    /// Convex-clustering ADMM stops when both `U` and `S` move by at most
    /// this (sup-norm).
    pub admm_tol: T,
    pub max_admm: usize,
}

impl<T: Real> Default for CentroidOptions<T> {
    fn default() -> Self {
        CentroidOptions {
            fista_tol: T::lit(1e-8),
            max_fista: 2000,
            admm_tol: T::lit(1e-9),
            max_admm: 5000,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CentroidProblem<'a, T> {
    graph: &'a TaskGraph<T>,
    target: ArrayView2<'a, T>,
    quad: T,
    fusion: T,
    nu: T,
}

impl<'a, T: Real> CentroidProblem<'a, T> {
    pub fn new(
        graph: &'a TaskGraph<T>,
        target: ArrayView2<'a, T>,
        quad: T,
        fusion: T,
        nu: T,
    ) -> Result<Self> {
        if target.nrows() != graph.n_tasks() {
            return Err(Error::shape(format!(
                "target has {} rows but the graph has {} tasks",
                target.nrows(),
                graph.n_tasks()
            )));
        }
        if !(quad >= T::zero()) || !quad.is_finite() {
            return Err(Error::invalid(format!(
                "quadratic weight must be >= 0, got {quad}"
            )));
        }
        if !(fusion >= T::zero()) || !fusion.is_finite() {
            return Err(Error::invalid(format!(
                "fusion weight must be >= 0, got {fusion}"
            )));
        }
        if !(nu > T::zero()) || !nu.is_finite() {
            return Err(Error::invalid(format!("nu must be > 0, got {nu}")));
        }
        Ok(CentroidProblem {
            graph,
            target,
            quad,
            fusion,
            nu,
        })
    }

    fn check(&self, u: ArrayView2<'_, T>, s: ArrayView2<'_, T>) -> Result<()> {
        if u.dim() != self.target.dim() {
            return Err(Error::shape("centroid matrix does not match the target"));
        }
        if s.dim() != (self.graph.n_edges(), self.target.ncols()) {
            return Err(Error::shape(format!(
                "dual matrix must be {} x {}",
                self.graph.n_edges(),
                self.target.ncols()
            )));
        }
        Ok(())
    }

    /// Inverse Lipschitz constant of the gradient.
    pub fn step(&self) -> T {
        lipschitz_step_scaled(self.graph, self.quad, self.nu)
    }

    /// `φ₁(U)` for the dual `S`.
    pub fn value(&self, u: ArrayView2<'_, T>, s: ArrayView2<'_, T>) -> Result<T> {
        self.check(u, s)?;
        let half = T::lit(0.5);
        let mut quad = T::zero();
        Zip::from(&self.target)
            .and(&u)
            .for_each(|&t, &x| quad += (t - x) * (t - x));
        let mut total = half * self.quad * quad;
        let p = u.ncols();
        let mut c = vec![T::zero(); p];
        for (e, edge) in self.graph.edges().iter().enumerate() {
            let sr = s.row(e);
            let mut s2 = T::zero();
            let mut c2 = T::zero();
            for j in 0..p {
                c[j] = u[[edge.source, j]] - u[[edge.target, j]] + sr[j] / self.nu;
                c2 += c[j] * c[j];
                s2 += sr[j] * sr[j];
            }
            let tau = self.fusion * edge.weight / self.nu;
            let cn = c2.sqrt();
            let huber = if cn <= tau {
                half * c2
            } else {
                tau * cn - half * tau * tau
            };
            total += self.nu * huber - s2 / (T::lit(2.0) * self.nu);
        }
        Ok(total)
    }

    /// `∇φ₁(U) = q(U − T) + A_Eᵀ F` with `F = proj(S + ν A_E U, f r)`.
    pub fn gradient(&self, u: ArrayView2<'_, T>, s: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check(u, s)?;
        let mut f = Array2::zeros(s.dim());
        let mut g = Array2::zeros(u.dim());
        self.gradient_into(u, s, f.view_mut(), g.view_mut());
        Ok(g)
    }

    fn edge_prox_into(
        &self,
        u: ArrayView2<'_, T>,
        s: ArrayView2<'_, T>,
        mut f: ArrayViewMut2<'_, T>,
    ) {
        incidence_into(u, self.graph, f.view_mut());
        let nu = self.nu;
        Zip::from(&mut f)
            .and(&s)
            .for_each(|fv, &sv| *fv = sv + nu * *fv);
        for (row, edge) in f.axis_iter_mut(Axis(0)).zip(self.graph.edges()) {
            project_ball(row, self.fusion * edge.weight);
        }
    }

    fn gradient_into(
        &self,
        u: ArrayView2<'_, T>,
        s: ArrayView2<'_, T>,
        mut f: ArrayViewMut2<'_, T>,
        mut g: ArrayViewMut2<'_, T>,
    ) {
        self.edge_prox_into(u, s, f.view_mut());
        incidence_transpose_into(f.view(), self.graph, g.view_mut());
        let q = self.quad;
        Zip::from(&mut g)
            .and(&u)
            .and(&self.target)
            .for_each(|gv, &x, &t| *gv += q * (x - t));
    }

    /// Accelerated gradient descent on `φ₁` from `u0`, with momentum reset
    /// whenever the step and the gradient disagree. Returns the final
    /// iterate, the iteration count and whether `tol` was met.
    pub fn fista(
        &self,
        u0: ArrayView2<'_, T>,
        s: ArrayView2<'_, T>,
        tol: T,
        max_iter: usize,
    ) -> Result<(Array2<T>, usize, bool)> {
        self.check(u0, s)?;
        if self.fusion == T::zero() || self.graph.n_edges() == 0 {
            return Ok((self.target.to_owned(), 0, true));
        }
        let step = self.step();
        let mut h_prev = u0.to_owned();
        let mut c = u0.to_owned();
        let mut h = Array2::zeros(u0.dim());
        let mut f = Array2::zeros(s.dim());
        let mut g = Array2::zeros(u0.dim());
        let mut alpha = T::one();
        let one = T::one();
        let four = T::lit(4.0);
        for it in 1..=max_iter {
            self.gradient_into(c.view(), s, f.view_mut(), g.view_mut());
            Zip::from(&mut h)
                .and(&c)
                .and(&g)
                .for_each(|hv, &cv, &gv| *hv = cv - step * gv);
            let change = max_abs_diff(h.view(), h_prev.view());
            let mut agree = T::zero();
            Zip::from(&g)
                .and(&h)
                .and(&h_prev)
                .for_each(|&gv, &hv, &pv| agree += gv * (hv - pv));
            let alpha_next = if agree > T::zero() {
                one
            } else {
                (one + (one + four * alpha * alpha).sqrt()) * T::lit(0.5)
            };
            let beta = if agree > T::zero() {
                T::zero()
            } else {
                (alpha - one) / alpha_next
            };
            Zip::from(&mut c)
                .and(&h)
                .and(&h_prev)
                .for_each(|cv, &hv, &pv| *cv = hv + beta * (hv - pv));
            std::mem::swap(&mut h_prev, &mut h);
            alpha = alpha_next;
            if change <= tol {
                return Ok((h_prev, it, true));
            }
        }
        Ok((h_prev, max_iter, false))
    }

    /// `S ← proj(S + ν A_E U, f r)` edge-wise; returns the sup-norm change.
    pub fn dual_update(&self, u: ArrayView2<'_, T>, s: &mut Array2<T>) -> Result<T> {
        self.check(u, s.view())?;
        let mut next = Array2::zeros(s.dim());
        self.edge_prox_into(u, s.view(), next.view_mut());
        let change = max_abs_diff(next.view(), s.view());
        *s = next;
        Ok(change)
    }

    /// Solves `min_U (q/2)‖T − U‖² + f Σ_E r‖u_a − u_b‖` by repeated FISTA
    /// centroid steps and dual updates, warm-started at `u` and `s`.
    /// Returns the number of dual updates performed.
    pub fn solve(
        &self,
        u: &mut Array2<T>,
        s: &mut Array2<T>,
        opts: &CentroidOptions<T>,
    ) -> Result<usize> {
        self.check(u.view(), s.view())?;
        if self.quad == T::zero() {
            let mean = self.target.mean_axis(Axis(0)).expect("non-empty target");
            for mut row in u.axis_iter_mut(Axis(0)) {
                row.assign(&mean);
            }
            return Ok(0);
        }
        if self.fusion == T::zero() || self.graph.n_edges() == 0 {
            u.assign(&self.target);
            s.fill(T::zero());
            return Ok(0);
        }
        let mut last = T::infinity();
        for it in 1..=opts.max_admm {
            let (next, _, _) = self.fista(u.view(), s.view(), opts.fista_tol, opts.max_fista)?;
            let du = max_abs_diff(next.view(), u.view());
            *u = next;
            let ds = self.dual_update(u.view(), s)?;
            last = du.max(ds);
            if last <= opts.admm_tol {
                return Ok(it);
            }
        }
        Err(Error::NotConverged {
            iterations: opts.max_admm,
            last_change: last.as_f64(),
            last_iterate: u.iter().map(|v| v.as_f64()).collect(),
            trace: Vec::new(),
        })
    }
}

/// Row norms of `A_E U`.
pub(crate) fn edge_gaps<T: Real>(u: ArrayView2<'_, T>, graph: &TaskGraph<T>) -> Vec<T> {
    graph
        .edges()
        .iter()
        .map(|e| norm2((&u.row(e.source) - &u.row(e.target)).view()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn path() -> TaskGraph<f64> {
        TaskGraph::<f64>::from_edges(3, vec![(0, 1, 1.0), (1, 2, 0.5)], 1).unwrap()
    }

    #[test]
    fn zero_fusion_returns_target() {
        let g = path();
        let t = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let p = CentroidProblem::new(&g, t.view(), 1.0, 0.0, 1.0).unwrap();
        let mut u = Array2::zeros((3, 2));
        let mut s = Array2::zeros((2, 2));
        p.solve(&mut u, &mut s, &CentroidOptions::default())
            .unwrap();
        assert_eq!(u, t);
    }

    #[test]
    fn large_fusion_merges_to_mean() {
        let g = TaskGraph::<f64>::complete(3);
        let t = array![[1.0, 0.0], [2.0, 1.0], [6.0, 2.0]];
        let p = CentroidProblem::new(&g, t.view(), 1.0, 100.0, 1.0).unwrap();
        let mut u = t.clone();
        let mut s = Array2::zeros((3, 2));
        p.solve(&mut u, &mut s, &CentroidOptions::default())
            .unwrap();
        for row in u.rows() {
            assert!((row[0] - 3.0).abs() < 1e-6);
            assert!((row[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn two_point_closed_form() {
        // Two points at distance d with weight f: centroids move f/q each
        // towards the other until they meet at d/2.
        let g = TaskGraph::<f64>::complete(2);
        let t = array![[0.0], [4.0]];
        let p = CentroidProblem::new(&g, t.view(), 1.0, 0.5, 1.0).unwrap();
        let mut u = t.clone();
        let mut s = Array2::zeros((1, 1));
        p.solve(&mut u, &mut s, &CentroidOptions::default())
            .unwrap();
        assert!((u[[0, 0]] - 0.5).abs() < 1e-7);
        assert!((u[[1, 0]] - 3.5).abs() < 1e-7);
    }

    #[test]
    fn dual_stays_in_ball() {
        let g = path();
        let t = array![[1.0, 2.0], [-3.0, 4.0], [5.0, -6.0]];
        let p = CentroidProblem::new(&g, t.view(), 1.0, 0.7, 2.0).unwrap();
        let mut s = array![[10.0, 0.0], [0.0, -10.0]];
        p.dual_update(t.view(), &mut s).unwrap();
        for (row, e) in s.rows().into_iter().zip(g.edges()) {
            assert!(norm2(row) <= 0.7 * e.weight + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let g = path();
        let t = array![[1.0], [2.0]];
        assert!(CentroidProblem::new(&g, t.view(), 1.0, 1.0, 1.0).is_err());
        let t = array![[1.0], [2.0], [3.0]];
        assert!(CentroidProblem::new(&g, t.view(), 1.0, 1.0, 0.0).is_err());
        let p = CentroidProblem::new(&g, t.view(), 1.0, 1.0, 1.0).unwrap();
        assert!(p.value(t.view(), Array2::zeros((1, 1)).view()).is_err());
    }
}
