//! k-nearest-neighbour task graph, its signed incidence operator, and the
//! weighted fusion norm `Σ_E r‖u_a − u_b‖`.
//!
//! Edges are stored once per unordered pair, as `(source, target)` with
//! `source < target`, in lexicographic order. Row `e` of every edge-indexed
//! matrix (incidence products, dual variables) follows that order.

use std::io::Write;

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge<T> {
    pub source: usize,
    pub target: usize,
    pub weight: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskGraph<T> {
    n_tasks: usize,
    edges: Vec<Edge<T>>,
    k: usize,
}

impl<T: Real> TaskGraph<T> {
    /// Builds a graph from `(a, b, weight)` triples. Pairs are reordered so
    /// that `a < b`; zero weights are dropped.
    pub fn from_edges(
        n_tasks: usize,
        edges: impl IntoIterator<Item = (usize, usize, T)>,
        k: usize,
    ) -> Result<Self> {
        let mut out: Vec<Edge<T>> = Vec::new();
        for (a, b, w) in edges {
            if a == b {
                return Err(Error::invalid(format!("self-loop on task {a}")));
            }
            if a >= n_tasks || b >= n_tasks {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) out of range for {n_tasks} tasks"
                )));
            }
            if !(w >= T::zero()) || !w.is_finite() {
                return Err(Error::invalid(format!("edge ({a}, {b}) has weight {w}")));
            }
            if w == T::zero() {
                continue;
            }
            let (source, target) = if a < b { (a, b) } else { (b, a) };
            out.push(Edge {
                source,
                target,
                weight: w,
            });
        }
        out.sort_by_key(|e| (e.source, e.target));
        if out
            .windows(2)
            .any(|p| p[0].source == p[1].source && p[0].target == p[1].target)
        {
            return Err(Error::invalid("duplicate edge"));
        }
        Ok(TaskGraph {
            n_tasks,
            edges: out,
            k,
        })
    }

    /// Complete graph with unit weights.
    pub fn complete(n_tasks: usize) -> Self {
        let edges = (0..n_tasks)
            .flat_map(|a| ((a + 1)..n_tasks).map(move |b| (a, b, T::one())))
            .collect::<Vec<_>>();
        Self::from_edges(n_tasks, edges, n_tasks.saturating_sub(1)).expect("valid complete graph")
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Unweighted degree of each task, i.e. the diagonal of `A_Eᵀ A_E`.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_tasks];
        for e in &self.edges {
            deg[e.source] += 1;
            deg[e.target] += 1;
        }
        deg
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    /// Edge list as CSV with columns `m1,m2,weight` (0-based task indices).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "m1,m2,weight")?;
        for e in &self.edges {
            writeln!(out, "{},{},{}", e.source, e.target, e.weight)?;
        }
        Ok(())
    }

    fn check_rows(&self, rows: usize, what: &str) -> Result<()> {
        if rows != self.n_tasks {
            return Err(Error::shape(format!(
                "{what} has {rows} rows but the graph has {} tasks",
                self.n_tasks
            )));
        }
        Ok(())
    }
}

/// Symmetrised k-NN weights `R = (Sᵀ + S)/2` over the rows of `coefs`.
///
/// `S[a][b] = 1` iff row `a` is among the `k` nearest rows (Euclidean, self
/// excluded) to row `b`. Distance ties go to the lower task index.
pub fn knn_weights<T: Real>(coefs: ArrayView2<'_, T>, k: usize) -> Result<TaskGraph<T>> {
    let n = coefs.nrows();
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if k >= n {
        return Err(Error::invalid(format!(
            "k = {k} must be smaller than the number of tasks {n}"
        )));
    }
    if coefs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("coefficient matrix has non-finite entries"));
    }
    let dist2 = |a: usize, b: usize| -> T {
        coefs
            .row(a)
            .iter()
            .zip(coefs.row(b).iter())
            .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
    };
    // s[a][b]: a is a neighbour of b.
    let mut s = vec![vec![false; n]; n];
    for b in 0..n {
        let mut others: Vec<(T, usize)> = (0..n)
            .filter(|&a| a != b)
            .map(|a| (dist2(a, b), a))
            .collect();
        others.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
        for &(_, a) in others.iter().take(k) {
            s[a][b] = true;
        }
    }
    let half = T::lit(0.5);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            let w = match (s[a][b], s[b][a]) {
                (true, true) => T::one(),
                (true, false) | (false, true) => half,
                (false, false) => continue,
            };
            edges.push((a, b, w));
        }
    }
    TaskGraph::from_edges(n, edges, k)
}

/// `Σ_{(a,b)∈E} r_ab ‖u_a − u_b‖₂`.
pub fn fused_norm<T: Real>(u: ArrayView2<'_, T>, graph: &TaskGraph<T>) -> Result<T> {
    graph.check_rows(u.nrows(), "centroid matrix")?;
    Ok(fused_norm_unchecked(u, graph))
}

pub(crate) fn fused_norm_unchecked<T: Real>(u: ArrayView2<'_, T>, graph: &TaskGraph<T>) -> T {
    graph
        .edges
        .iter()
        .map(|e| {
            let d = u
                .row(e.source)
                .iter()
                .zip(u.row(e.target).iter())
                .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
            e.weight * d.sqrt()
        })
        .sum()
}

/// `A_E U`: row `e = (a, b)` is `u_a − u_b`.
pub fn apply_incidence<T: Real>(u: ArrayView2<'_, T>, graph: &TaskGraph<T>) -> Result<Array2<T>> {
    graph.check_rows(u.nrows(), "centroid matrix")?;
    let mut out = Array2::zeros((graph.n_edges(), u.ncols()));
    incidence_into(u, graph, out.view_mut());
    Ok(out)
}

/// `A_Eᵀ F`: scatters `+f_e` to `a` and `−f_e` to `b`.
pub fn apply_incidence_transpose<T: Real>(
    f: ArrayView2<'_, T>,
    graph: &TaskGraph<T>,
) -> Result<Array2<T>> {
    if f.nrows() != graph.n_edges() {
        return Err(Error::shape(format!(
            "edge matrix has {} rows but the graph has {} edges",
            f.nrows(),
            graph.n_edges()
        )));
    }
    let mut out = Array2::zeros((graph.n_tasks(), f.ncols()));
    incidence_transpose_into(f, graph, out.view_mut());
    Ok(out)
}

pub(crate) fn incidence_into<T: Real>(
    u: ArrayView2<'_, T>,
    graph: &TaskGraph<T>,
    mut out: ArrayViewMut2<'_, T>,
) {
    for (i, e) in graph.edges.iter().enumerate() {
        let a = u.row(e.source);
        let b = u.row(e.target);
        for ((o, &x), &y) in out.row_mut(i).iter_mut().zip(a.iter()).zip(b.iter()) {
            *o = x - y;
        }
    }
}

pub(crate) fn incidence_transpose_into<T: Real>(
    f: ArrayView2<'_, T>,
    graph: &TaskGraph<T>,
    mut out: ArrayViewMut2<'_, T>,
) {
    out.fill(T::zero());
    for (i, e) in graph.edges.iter().enumerate() {
        let row = f.row(i);
        for (j, &v) in row.iter().enumerate() {
            out[[e.source, j]] += v;
            out[[e.target, j]] -= v;
        }
    }
}

/// FISTA step `ι = 1/(λ₁ + 2·max_i (A_EᵀA_E)_ii)`.
pub fn lipschitz_step<T: Real>(graph: &TaskGraph<T>, lambda1: T) -> T {
    lipschitz_step_scaled(graph, lambda1, T::one())
}

/// Step `1/(λ₁ + 2ν·max degree)`, the inverse Lipschitz bound of the
/// centroid gradient when the augmented term carries weight `ν`.
pub fn lipschitz_step_scaled<T: Real>(graph: &TaskGraph<T>, lambda1: T, nu: T) -> T {
    let deg = T::lit(graph.max_degree() as f64);
    T::one() / (lambda1 + T::lit(2.0) * nu * deg)
}
