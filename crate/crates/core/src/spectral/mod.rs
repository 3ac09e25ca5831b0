//! Singular value decomposition of semantic embeddings, the two static
//! spectral projections, and the covariance-spectrum collapse diagnostic.

mod spectrum;
mod svd;

pub use spectrum::{cumulative_spectrum, cumulative_spectrum_with, SpectrumReport, COVERAGE_THRESHOLD};
pub use svd::{svd_decompose, SvdFactors, RANK_TOLERANCE};

use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;
use crate::Scalar;

fn check_dim<T: Scalar>(f: &SvdFactors<T>, d: usize) -> Result<()> {
    if d == 0 || d > f.rank() {
        return Err(Error::dim(format!("d={d} outside 1..={}", f.rank())));
    }
    Ok(())
}

/// Top-`d` principal components scaled by their singular values,
/// `U[:, :d] · diag(σ₁..σ_d)`.
pub fn truncate_project<T: Scalar>(f: &SvdFactors<T>, d: usize) -> Result<DenseMatrix<T>> {
    check_dim(f, d)?;
    let u = f.u();
    Ok(DenseMatrix::from_fn(u.rows(), d, |i, j| u[(i, j)] * f.sigma()[j]))
}

/// Whitened principal directions `U[:, :d]`.
pub fn identity_project<T: Scalar>(f: &SvdFactors<T>, d: usize) -> Result<DenseMatrix<T>> {
    check_dim(f, d)?;
    if f.sigma()[d - 1] <= T::zero() {
        return Err(Error::Singularity(format!("σ_{d} is zero")));
    }
    f.u().columns(0, d)
}
