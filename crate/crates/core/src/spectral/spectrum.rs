use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;
use crate::spectral::svd_decompose;
use crate::Scalar;

/// Cumulative fraction used for the effective-rank summary.
pub const COVERAGE_THRESHOLD: f64 = 0.95;

/// Eigenvalues of an embedding set's column covariance and their cumulative
/// share of the total.
#[derive(Clone, Debug)]
pub struct SpectrumReport<T> {
    /// One per column, non-increasing.
    pub eigenvalues: Vec<T>,
    /// Cumulative fraction after each component; the last entry is 1.
    pub cumulative: Vec<T>,
    /// Number of components emitted by [`SpectrumReport::to_csv`].
    pub top_k: usize,
    /// Smallest `k` with cumulative fraction ≥ 0.95.
    pub effective_rank: usize,
}

impl<T: Scalar> SpectrumReport<T> {
    /// Cumulative fraction captured by the top `k` components (`k ≥ 1`).
    pub fn fraction_at(&self, k: usize) -> T {
        if k == 0 {
            return T::zero();
        }
        self.cumulative[k.min(self.cumulative.len()) - 1]
    }

    /// `rank,eigenvalue,cumulative_fraction` rows for the first `top_k` components.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,eigenvalue,cumulative_fraction\n");
        for k in 0..self.top_k {
            let _ = writeln!(out, "{},{},{}", k + 1, self.eigenvalues[k], self.cumulative[k]);
        }
        out
    }
}

/// Covariance spectrum of the rows of `e` with columns mean-centred.
pub fn cumulative_spectrum<T: Scalar>(e: &DenseMatrix<T>, top_k: usize) -> Result<SpectrumReport<T>> {
    cumulative_spectrum_with(e, top_k, true)
}

/// As [`cumulative_spectrum`], optionally skipping the centring step.
pub fn cumulative_spectrum_with<T: Scalar>(e: &DenseMatrix<T>, top_k: usize, center: bool) -> Result<SpectrumReport<T>> {
    let (n, c) = e.shape();
    if n < 2 {
        return Err(Error::dim("spectrum needs at least two rows"));
    }
    if top_k == 0 || top_k > c {
        return Err(Error::dim(format!("top_k={top_k} outside 1..={c}")));
    }
    let mut x = e.clone();
    if center {
        let means = e.column_sums().scale(T::one() / T::of_usize(n));
        for i in 0..n {
            for (v, &m) in x.row_mut(i).iter_mut().zip(means.data()) {
                *v -= m;
            }
        }
    }
    let mut eigenvalues = vec![T::zero(); c];
    if x.max_abs() > T::zero() {
        let f = svd_decompose(&x)?;
        let denom = T::of_usize(n - 1);
        for (ev, &s) in eigenvalues.iter_mut().zip(f.sigma()) {
            *ev = s * s / denom;
        }
    }
    let total: T = eigenvalues.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::Data("embedding set has zero variance".into()));
    }
    let mut acc = T::zero();
    let mut cumulative: Vec<T> = eigenvalues
        .iter()
        .map(|&v| {
            acc += v;
            acc / total
        })
        .collect();
    if let Some(last) = cumulative.last_mut() {
        *last = T::one();
    }
    let threshold = T::of(COVERAGE_THRESHOLD);
    let effective_rank = cumulative.iter().position(|&f| f >= threshold).map_or(c, |p| p + 1);
    Ok(SpectrumReport {
        eigenvalues,
        cumulative,
        top_k,
        effective_rank,
    })
}
