//! Householder QR for tall matrices.

use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;
use crate::Scalar;

/// Thin QR factorisation `A = Q R` of an `m × n` matrix with `m ≥ n`.
///
/// `Q` is `m × n` with orthonormal columns and `R` is `n × n` upper
/// triangular.
pub fn householder_qr<T: Scalar>(a: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::dim(format!("thin QR needs rows >= cols, got {m}x{n}")));
    }
    let mut work = a.clone();
    // Householder vectors, stored over rows k..m; `None` marks an identity step.
    let mut reflectors: Vec<Option<Vec<T>>> = Vec::with_capacity(n);
    let mut w = vec![T::zero(); n];

    for k in 0..n {
        let norm = (k..m).map(|i| work[(i, k)] * work[(i, k)]).sum::<T>().sqrt();
        if norm == T::zero() {
            reflectors.push(None);
            continue;
        }
        let x0 = work[(k, k)];
        let alpha = if x0 >= T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..m).map(|i| work[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        if vnorm2 == T::zero() {
            reflectors.push(None);
            continue;
        }
        let tau = T::of(2.0) / vnorm2;
        apply_reflector(&mut work, &v, tau, k, k, &mut w);
        reflectors.push(Some(v));
    }

    let mut r = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            r[(i, j)] = work[(i, j)];
        }
    }

    let mut q = DenseMatrix::zeros(m, n);
    for i in 0..n {
        q[(i, i)] = T::one();
    }
    for (k, v) in reflectors.iter().enumerate().rev() {
        if let Some(v) = v {
            let vnorm2: T = v.iter().map(|&x| x * x).sum();
            apply_reflector(&mut q, v, T::of(2.0) / vnorm2, k, 0, &mut w);
        }
    }
    Ok((q, r))
}

/// `A[k.., c0..] -= tau · v (vᵀ A[k.., c0..])`, touching rows contiguously.
fn apply_reflector<T: Scalar>(a: &mut DenseMatrix<T>, v: &[T], tau: T, k: usize, c0: usize, w: &mut [T]) {
    let cols = a.cols();
    let w = &mut w[..cols - c0];
    w.iter_mut().for_each(|x| *x = T::zero());
    for (off, &vi) in v.iter().enumerate() {
        if vi == T::zero() {
            continue;
        }
        for (acc, &x) in w.iter_mut().zip(&a.row(k + off)[c0..]) {
            *acc += vi * x;
        }
    }
    for (off, &vi) in v.iter().enumerate() {
        let s = tau * vi;
        if s == T::zero() {
            continue;
        }
        for (x, &acc) in a.row_mut(k + off)[c0..].iter_mut().zip(w.iter()) {
            *x -= s * acc;
        }
    }
}
