use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numkit::tape::taylor_weights;
use crate::numkit::{softshrink, DenseMatrix, ParamId, ParamStore, Tape, Var};
use crate::rng::{gaussian, Rng};
use crate::spectral::SvdFactors;
use crate::Scalar;

pub const MAX_TAYLOR_ORDER: usize = 8;

const Q_NAME: &str = "spectran.q";
const K_NAME: &str = "spectran.k";
const ALPHA_NAME: &str = "spectran.alpha";
const LAMBDA_NAME: &str = "spectran.lambda";

/// Whether the Taylor coefficients are one vector for all components or one per component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TaylorMode {
    #[default]
    Shared,
    PerComponent,
}

impl fmt::Display for TaylorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaylorMode::Shared => "shared",
            TaylorMode::PerComponent => "per_component",
        })
    }
}

impl FromStr for TaylorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(TaylorMode::Shared),
            "per_component" => Ok(TaylorMode::PerComponent),
            _ => Err(Error::Config(format!("unknown taylor mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpecTranConfig {
    /// Output dimension.
    pub d: usize,
    /// Inner attention dimension.
    pub m: usize,
    /// Taylor order `n`; the polynomial has `n + 1` coefficients.
    pub order: usize,
    pub mode: TaylorMode,
    /// Standard deviation of the Gaussian initialisation of `Q` and `K`.
    pub init_std: f64,
}

impl SpecTranConfig {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            m: d,
            order: 3,
            mode: TaylorMode::Shared,
            init_std: 0.1,
        }
    }

    pub fn validate(&self, r: usize) -> Result<()> {
        if self.d == 0 || self.m == 0 {
            return Err(Error::Config("spectran d and m must be positive".into()));
        }
        if self.d > r {
            return Err(Error::Config(format!(
                "output dimension {} exceeds spectral rank {r}",
                self.d
            )));
        }
        if self.order > MAX_TAYLOR_ORDER {
            return Err(Error::Config(format!(
                "taylor order {} above {MAX_TAYLOR_ORDER}",
                self.order
            )));
        }
        Ok(())
    }
}

/// Handles to the learnable `Q (d×m)`, `K (r×m)`, `α` and raw `λ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpecTranParams {
    pub q: ParamId,
    pub k: ParamId,
    pub alpha: ParamId,
    pub lambda: ParamId,
    d: usize,
    r: usize,
    m: usize,
    order: usize,
}

impl SpecTranParams {
    /// Registers freshly initialised parameters: `Q, K ~ N(0, init_std²)`,
    /// `α = 1`, `λ = 0`.
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, cfg: &SpecTranConfig, r: usize, rng: &mut Rng) -> Result<Self> {
        cfg.validate(r)?;
        let q = gaussian(cfg.d, cfg.m, cfg.init_std, rng);
        let k = gaussian(r, cfg.m, cfg.init_std, rng);
        let alpha_rows = match cfg.mode {
            TaylorMode::Shared => 1,
            TaylorMode::PerComponent => cfg.d,
        };
        let alpha = DenseMatrix::filled(alpha_rows, cfg.order + 1, T::one());
        Self::with_values(store, q, k, alpha, T::zero())
    }

    /// Registers parameters with explicit values.
    pub fn with_values<T: Scalar>(
        store: &mut ParamStore<T>,
        q: DenseMatrix<T>,
        k: DenseMatrix<T>,
        alpha: DenseMatrix<T>,
        lambda_raw: T,
    ) -> Result<Self> {
        let (d, m) = q.shape();
        let r = k.rows();
        check_shapes(d, m, r, &k, &alpha)?;
        let order = alpha.cols() - 1;
        Ok(Self {
            q: store.insert(Q_NAME, q)?,
            k: store.insert(K_NAME, k)?,
            alpha: store.insert(ALPHA_NAME, alpha)?,
            lambda: store.insert(LAMBDA_NAME, DenseMatrix::scalar(lambda_raw))?,
            d,
            r,
            m,
            order,
        })
    }

    /// Re-attaches to parameters already present in `store`.
    pub fn from_store<T: Scalar>(store: &ParamStore<T>) -> Result<Self> {
        let find = |name: &str| {
            store
                .id(name)
                .ok_or_else(|| Error::Config(format!("parameter {name} missing")))
        };
        let (q, k, alpha, lambda) = (find(Q_NAME)?, find(K_NAME)?, find(ALPHA_NAME)?, find(LAMBDA_NAME)?);
        let (d, m) = store.value(q).shape();
        let r = store.value(k).rows();
        check_shapes(d, m, r, store.value(k), store.value(alpha))?;
        if store.value(lambda).shape() != (1, 1) {
            return Err(Error::dim("lambda must be 1x1"));
        }
        Ok(Self {
            q,
            k,
            alpha,
            lambda,
            d,
            r,
            m,
            order: store.value(alpha).cols() - 1,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn ids(&self) -> [ParamId; 4] {
        [self.q, self.k, self.alpha, self.lambda]
    }

    /// Number of trainable scalars.
    pub fn num_scalars<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        self.ids().iter().map(|&id| store.value(id).len()).sum()
    }

    /// Records `W = softshrink(QKᵀ, |λ|) + A` (`d × r`) on the tape.
    pub fn weights<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, sigma: &[T]) -> Result<Var> {
        if sigma.len() != self.r {
            return Err(Error::dim(format!(
                "{} singular values for spectral rank {}",
                sigma.len(),
                self.r
            )));
        }
        let q = tape.param(store, self.q);
        let k = tape.param(store, self.k);
        let alpha = tape.param(store, self.alpha);
        let lambda = tape.param(store, self.lambda);
        let qk = tape.matmul_nt(q, k)?;
        let shrunk = tape.softshrink(qk, lambda)?;
        let a = tape.spectral_encoding(alpha, sigma, self.d, self.r)?;
        tape.add(shrunk, a)
    }

    /// Records `E_s = U Wᵀ` for a basis node `u` (`N × r`).
    pub fn project<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, u: Var, sigma: &[T]) -> Result<Var> {
        if tape.value(u).cols() != self.r {
            return Err(Error::dim(format!(
                "basis has {} columns, spectral rank is {}",
                tape.value(u).cols(),
                self.r
            )));
        }
        let w = self.weights(tape, store, sigma)?;
        tape.matmul_nt(u, w)
    }

    /// Current value of `W`.
    pub fn weight_matrix<T: Scalar>(&self, store: &ParamStore<T>, sigma: &[T]) -> Result<DenseMatrix<T>> {
        let qk = store.value(self.q).matmul_nt(store.value(self.k))?;
        let lam = store.value(self.lambda).item()?;
        let mut w = softshrink(&qk, lam);
        let diag = taylor_weights(store.value(self.alpha), sigma, self.d)?;
        for (i, v) in diag.into_iter().enumerate() {
            w[(i, i)] += v;
        }
        Ok(w)
    }
}

fn check_shapes<T: Scalar>(d: usize, m: usize, r: usize, k: &DenseMatrix<T>, alpha: &DenseMatrix<T>) -> Result<()> {
    if d == 0 || m == 0 || k.cols() != m || d > r {
        return Err(Error::dim(format!("Q is {d}x{m}, K is {:?}", k.shape())));
    }
    if alpha.cols() == 0 || alpha.cols() > MAX_TAYLOR_ORDER + 1 || (alpha.rows() != 1 && alpha.rows() != d) {
        return Err(Error::dim(format!("alpha shape {:?} for d={d}", alpha.shape())));
    }
    Ok(())
}

/// Principal diagonal weights `σ₁ · Σ_k α_k (σ_i/σ₁)^k` for `i < d`.
pub fn taylor_diag<T: Scalar>(sigma: &[T], alpha: &[T], d: usize) -> Result<Vec<T>> {
    if d > sigma.len() {
        return Err(Error::dim(format!("d={d} exceeds {} singular values", sigma.len())));
    }
    let a = DenseMatrix::new(1, alpha.len(), alpha.to_vec())?;
    taylor_weights(&a, sigma, d)
}

/// The `d × r` encoding `A = [diag(h(σ)), 0]`.
pub fn build_positional_encoding<T: Scalar>(
    f: &SvdFactors<T>,
    store: &ParamStore<T>,
    params: &SpecTranParams,
) -> Result<DenseMatrix<T>> {
    if params.d > f.rank() || params.r != f.rank() {
        return Err(Error::dim(format!(
            "params (d={}, r={}) against spectral rank {}",
            params.d,
            params.r,
            f.rank()
        )));
    }
    let diag = taylor_weights(store.value(params.alpha), f.sigma(), params.d)?;
    let mut a = DenseMatrix::zeros(params.d, params.r);
    for (i, v) in diag.into_iter().enumerate() {
        a[(i, i)] = v;
    }
    Ok(a)
}

/// `E_s = U · [softshrink(QKᵀ, |λ|) + A]ᵀ`, shape `N × d`.
pub fn spectran_project<T: Scalar>(
    f: &SvdFactors<T>,
    store: &ParamStore<T>,
    params: &SpecTranParams,
) -> Result<DenseMatrix<T>> {
    if params.r != f.rank() {
        return Err(Error::dim(format!(
            "params built for rank {}, factors have rank {}",
            params.r,
            f.rank()
        )));
    }
    let w = params.weight_matrix(store, f.sigma())?;
    f.u().matmul_nt(&w)
}

/// Absolute attention mass on principal (`j < d`) and subordinate (`j ≥ d`) columns of `W`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralWeightReport {
    pub principal: f64,
    pub subordinate: f64,
}

impl SpectralWeightReport {
    pub const CSV_HEADER: &'static str = "dataset,principal,subordinate";

    pub fn csv_row(&self, dataset: &str) -> String {
        format!("{dataset},{:.6},{:.6}", self.principal, self.subordinate)
    }
}

pub fn weight_totals<T: Scalar>(w: &DenseMatrix<T>, d: usize) -> SpectralWeightReport {
    let mut principal = 0.0;
    let mut subordinate = 0.0;
    for i in 0..w.rows().min(d) {
        for (j, &v) in w.row(i).iter().enumerate() {
            if j < d {
                principal += v.abs().as_f64();
            } else {
                subordinate += v.abs().as_f64();
            }
        }
    }
    SpectralWeightReport { principal, subordinate }
}

pub fn spectral_weight_report<T: Scalar>(
    store: &ParamStore<T>,
    params: &SpecTranParams,
    f: &SvdFactors<T>,
) -> Result<SpectralWeightReport> {
    let w = params.weight_matrix(store, f.sigma())?;
    Ok(weight_totals(&w, params.d))
}
