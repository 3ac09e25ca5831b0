use crate::numkit::DenseMatrix;
use crate::Scalar;

/// Shrinks `x` toward zero by `lambda`, zeroing the band `[-lambda, lambda]`.
#[inline]
pub fn softshrink_scalar<T: Scalar>(x: T, lambda: T) -> T {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        T::zero()
    }
}

/// Elementwise softshrink. The threshold is taken as `|lambda|`.
pub fn softshrink<T: Scalar>(x: &DenseMatrix<T>, lambda: T) -> DenseMatrix<T> {
    let lambda = lambda.abs();
    x.map(|v| softshrink_scalar(v, lambda))
}

pub fn relu<T: Scalar>(x: &DenseMatrix<T>) -> DenseMatrix<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Sum in ascending order, so the result does not depend on the input order.
pub(crate) fn order_free_sum<T: Scalar>(values: &[T]) -> T {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v.into_iter().sum()
}
