use crate::error::{Error, Result};
use crate::numkit::linalg::householder_qr;
use crate::numkit::DenseMatrix;
use crate::Scalar;

/// Relative cut-off below which trailing singular values are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `E = U diag(σ) Vᵀ` truncated to the effective rank `r`.
///
/// Singular values are non-increasing and every column of `U` has its
/// largest-magnitude entry positive.
#[derive(Clone, Debug)]
pub struct SvdFactors<T> {
    u: DenseMatrix<T>,
    sigma: Vec<T>,
    vt: DenseMatrix<T>,
}

impl<T: Scalar> SvdFactors<T> {
    /// Assembles factors from parts, checking shapes and the ordering of `sigma`.
    pub fn from_parts(u: DenseMatrix<T>, sigma: Vec<T>, vt: DenseMatrix<T>) -> Result<Self> {
        let r = sigma.len();
        if u.cols() != r || vt.rows() != r {
            return Err(Error::dim(format!(
                "U {:?}, {} singular values, Vt {:?}",
                u.shape(),
                r,
                vt.shape()
            )));
        }
        if sigma.iter().any(|&s| s < T::zero() || !s.is_finite())
            || sigma.windows(2).any(|w| w[0] < w[1])
        {
            return Err(Error::Data("singular values must be finite, non-negative and non-increasing".into()));
        }
        Ok(Self { u, sigma, vt })
    }

    /// Left singular vectors, `N × r`.
    pub fn u(&self) -> &DenseMatrix<T> {
        &self.u
    }

    pub fn sigma(&self) -> &[T] {
        &self.sigma
    }

    /// Right singular vectors as rows, `r × l`.
    pub fn vt(&self) -> &DenseMatrix<T> {
        &self.vt
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Number of rows of the decomposed matrix.
    pub fn n_rows(&self) -> usize {
        self.u.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.vt.cols()
    }

    pub fn reconstruct(&self) -> DenseMatrix<T> {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (v, &s) in us.row_mut(i).iter_mut().zip(&self.sigma) {
                *v *= s;
            }
        }
        us.matmul(&self.vt).expect("factor shapes are consistent")
    }
}

/// Singular value decomposition of a finite `N × l` matrix.
pub fn svd_decompose<T: Scalar>(e: &DenseMatrix<T>) -> Result<SvdFactors<T>> {
    let (n, l) = e.shape();
    if n == 0 || l == 0 {
        return Err(Error::dim(format!("cannot decompose a {n}x{l} matrix")));
    }
    if !e.is_finite() {
        return Err(Error::Data("matrix has non-finite entries".into()));
    }
    let (mut u, sigma, mut vt) = if n >= l {
        tall_svd(e)?
    } else {
        let (u_t, sigma, vt_t) = tall_svd(&e.transpose())?;
        (vt_t.transpose(), sigma, u_t.transpose())
    };
    for j in 0..sigma.len() {
        let mut best = 0;
        for i in 1..u.rows() {
            if u[(i, j)].abs() > u[(best, j)].abs() {
                best = i;
            }
        }
        if u[(best, j)] < T::zero() {
            for i in 0..u.rows() {
                u[(i, j)] = -u[(i, j)];
            }
            for v in vt.row_mut(j) {
                *v = -*v;
            }
        }
    }
    SvdFactors::from_parts(u, sigma, vt)
}

/// SVD of a tall matrix via QR followed by one-sided Jacobi on `R`.
fn tall_svd<T: Scalar>(a: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, Vec<T>, DenseMatrix<T>)> {
    let (q, r) = householder_qr(a)?;
    let n = r.rows();
    // Rows of `x` are the columns of R; rows of `v` are the columns of V.
    let mut x = r.transpose();
    let mut v = DenseMatrix::identity(n);
    jacobi_orthogonalize_rows(&mut x, &mut v);

    let norms: Vec<T> = (0..n).map(|j| row_norm(x.row(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let top = norms[order[0]];
    let cutoff = top * T::of(RANK_TOLERANCE);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&j| norms[j] > T::zero() && norms[j] >= cutoff)
        .collect();

    let k = kept.len();
    let mut xn = DenseMatrix::zeros(k, n);
    let mut vt = DenseMatrix::zeros(k, n);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &j) in kept.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        for (o, &val) in xn.row_mut(dst).iter_mut().zip(x.row(j)) {
            *o = val / s;
        }
        vt.row_mut(dst).copy_from_slice(v.row(j));
    }
    let u = q.matmul_nt(&xn)?;
    Ok((u, sigma, vt))
}

/// Hestenes rotations until all row pairs are orthogonal to working precision.
fn jacobi_orthogonalize_rows<T: Scalar>(x: &mut DenseMatrix<T>, v: &mut DenseMatrix<T>) {
    let n = x.rows();
    let eps = T::epsilon();
    for _ in 0..MAX_SWEEPS {
        let mut norms: Vec<T> = (0..n).map(|j| x.row(j).iter().map(|&t| t * t).sum()).collect();
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (a, b) = (norms[p], norms[q]);
                if a == T::zero() || b == T::zero() {
                    continue;
                }
                let g: T = x.row(p).iter().zip(x.row(q)).map(|(&s, &t)| s * t).sum();
                if g.abs() <= eps * (a * b).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (g + g);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_rows(x, p, q, c, s);
                rotate_rows(v, p, q, c, s);
                norms[p] = a - t * g;
                norms[q] = b + t * g;
            }
        }
        if !rotated {
            break;
        }
    }
}

fn rotate_rows<T: Scalar>(m: &mut DenseMatrix<T>, p: usize, q: usize, c: T, s: T) {
    let cols = m.cols();
    let data = m.data_mut();
    let (head, tail) = data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (a, b) in rp.iter_mut().zip(rq.iter_mut()) {
        let (xa, xb) = (*a, *b);
        *a = c * xa - s * xb;
        *b = s * xa + c * xb;
    }
}

fn row_norm<T: Scalar>(row: &[T]) -> T {
    row.iter().map(|&t| t * t).sum::<T>().sqrt()
}
