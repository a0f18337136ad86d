//! Small dense kernels: the systems solved here are at most a few dozen
//! rows wide (Newton steps, covariance inverses, fused-edge blocks).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::scalar::Real;

pub fn norm2<T: Real>(v: ArrayView1<'_, T>) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

pub fn sup_norm<T: Real>(v: impl IntoIterator<Item = T>) -> T {
    v.into_iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

pub fn frobenius<T: Real>(m: ArrayView2<'_, T>) -> T {
    m.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff<T: Real>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> T {
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (&x, &y)| acc.max((x - y).abs()))
}

/// Lower Cholesky factor of a symmetric positive definite matrix, or `None`
/// when a pivot is not strictly positive.
pub fn cholesky<T: Real>(a: ArrayView2<'_, T>) -> Option<Array2<T>> {
    let n = a.nrows();
    let mut l = Array2::<T>::zeros((n, n));
    let scale = a.diag().iter().fold(T::zero(), |acc, &x| acc.max(x.abs()));
    let floor = scale * T::epsilon() * T::lit(n as f64);
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d = d - l[[j, k]] * l[[j, k]];
        }
        if !(d > floor) {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s = s - l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` for a factor produced by [`cholesky`].
pub fn cholesky_solve<T: Real>(l: &Array2<T>, b: ArrayView1<'_, T>) -> Array1<T> {
    let n = l.nrows();
    let mut y = Array1::<T>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<T>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors as columns)`.
pub fn symmetric_eigen<T: Real>(a: ArrayView2<'_, T>) -> (Array1<T>, Array2<T>) {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut v = Array2::<T>::eye(n);
    let two = T::lit(2.0);
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .fold(T::zero(), |acc, (i, j)| acc + m[[i, j]] * m[[i, j]]);
        let diag: T = m.diag().iter().fold(T::zero(), |acc, &x| acc + x * x);
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    (m.diag().to_owned(), v)
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix. Eigenvalues below
/// `rtol * max|eigenvalue|` are treated as zero. The second value is the
/// numerical rank.
pub fn pinv_symmetric<T: Real>(a: ArrayView2<'_, T>, rtol: T) -> (Array2<T>, usize) {
    let n = a.nrows();
    let (vals, vecs) = symmetric_eigen(a);
    let top = vals.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()));
    let cut = top * rtol;
    let mut out = Array2::<T>::zeros((n, n));
    let mut rank = 0;
    for (k, &lam) in vals.iter().enumerate() {
        if lam.abs() <= cut || lam == T::zero() {
            continue;
        }
        rank += 1;
        let inv = T::one() / lam;
        for i in 0..n {
            for j in 0..n {
                out[[i, j]] = out[[i, j]] + vecs[[i, k]] * vecs[[j, k]] * inv;
            }
        }
    }
    (out, rank)
}
