//! Define-by-run reverse-mode tape over a fixed set of matrix primitives.
//!
//! Every method evaluates its output eagerly and records how to send a
//! gradient back to its inputs. Values are `Arc`-shared so parameters and
//! large constants enter the tape without copies.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numkit::ops::{order_free_sum, softshrink_scalar};
use crate::numkit::{DenseMatrix, ParamId, ParamStore};
use crate::Scalar;

/// Node handle on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Softshrink {
        x: Var,
        lambda: Var,
    },
    SpectralEncoding {
        alpha: Var,
        sigma: Vec<T>,
        d: usize,
    },
    ConcatCols(Var, Var),
    GatherRows {
        x: Var,
        index: Vec<Option<usize>>,
    },
    BlockScores {
        q: Var,
        k: Var,
        block: usize,
        scale: T,
    },
    BlockMix {
        p: Var,
        v: Var,
        block: usize,
    },
    MaskedSoftmax {
        x: Var,
        mask: Arc<Vec<bool>>,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: DenseMatrix<T>,
        inv_std: Vec<T>,
    },
    CandidateScores {
        user: Var,
        items: Var,
        cands: Arc<Vec<Vec<usize>>>,
    },
    InfoNce {
        scores: Var,
        inv_tau: T,
        probs: DenseMatrix<T>,
    },
    Sum(Var),
    SumSquares(Var),
}

struct Node<T> {
    value: Arc<DenseMatrix<T>>,
    op: Op<T>,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Recorded forward computation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Per-node gradients produced by [`Tape::backward`]. Only leaves keep theirs.
pub struct Gradients<T> {
    per_node: Vec<Option<DenseMatrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&DenseMatrix<T>> {
        self.per_node.get(v.0).and_then(Option::as_ref)
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DenseMatrix<T> {
        &self.nodes[v.0].value
    }

    pub fn shared_value(&self, v: Var) -> Arc<DenseMatrix<T>> {
        Arc::clone(&self.nodes[v.0].value)
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> Result<T> {
        self.value(v).item()
    }

    fn push(&mut self, value: DenseMatrix<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: impl Into<Arc<DenseMatrix<T>>>) -> Var {
        self.nodes.push(Node {
            value: value.into(),
            op: Op::Leaf,
            requires_grad: false,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf bound to a trainable parameter of `store`.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: store.shared(id),
            op: Op::Leaf,
            requires_grad: true,
            param: Some(id),
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient but is not tied to a store.
    pub fn variable(&mut self, value: impl Into<Arc<DenseMatrix<T>>>) -> Var {
        self.nodes.push(Node {
            value: value.into(),
            op: Op::Leaf,
            requires_grad: true,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.push(out, Op::MatMulNt(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// Adds a 1×cols row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        if rv.rows() != 1 || rv.cols() != xv.cols() {
            return Err(Error::dim(format!(
                "add_row {:?} with {:?}",
                xv.shape(),
                rv.shape()
            )));
        }
        let mut out = xv.clone();
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(rv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(x, row), &[x, row]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).scale(c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = crate::numkit::relu(self.value(x));
        self.push(out, Op::Relu(x), &[x])
    }

    /// Softshrink with threshold `|lambda|`, `lambda` a 1×1 node.
    pub fn softshrink(&mut self, x: Var, lambda: Var) -> Result<Var> {
        let lam = self.scalar(lambda)?.abs();
        let out = self.value(x).map(|v| softshrink_scalar(v, lam));
        Ok(self.push(out, Op::Softshrink { x, lambda }, &[x, lambda]))
    }

    /// Diagonal-plus-zero-block spectral encoding, shape `d × r`.
    ///
    /// Entry `(i, i)` for `i < d` is `σ₁ · Σ_k α_k (σ_i/σ₁)^k`. `alpha` is
    /// either one shared `1 × (n+1)` row or one row per component (`d × (n+1)`).
    pub fn spectral_encoding(&mut self, alpha: Var, sigma: &[T], d: usize, r: usize) -> Result<Var> {
        let av = self.value(alpha);
        if d > r || d > sigma.len() {
            return Err(Error::dim(format!(
                "encoding with d={d}, r={r}, {} singular values",
                sigma.len()
            )));
        }
        if av.rows() != 1 && av.rows() != d {
            return Err(Error::dim(format!(
                "alpha has {} rows, expected 1 or {d}",
                av.rows()
            )));
        }
        let weights = taylor_weights(av, sigma, d)?;
        let mut out = DenseMatrix::zeros(d, r);
        for (i, w) in weights.into_iter().enumerate() {
            out[(i, i)] = w;
        }
        let op = Op::SpectralEncoding {
            alpha,
            sigma: sigma[..d].to_vec(),
            d,
        };
        Ok(self.push(out, op, &[alpha]))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).hcat(self.value(b))?;
        Ok(self.push(out, Op::ConcatCols(a, b), &[a, b]))
    }

    /// Row lookup; `None` yields a zero row.
    pub fn gather_rows(&mut self, x: Var, index: Vec<Option<usize>>) -> Result<Var> {
        let xv = self.value(x);
        let mut out = DenseMatrix::zeros(index.len(), xv.cols());
        for (r, idx) in index.iter().enumerate() {
            if let Some(i) = *idx {
                if i >= xv.rows() {
                    return Err(Error::Index {
                        index: i,
                        len: xv.rows(),
                    });
                }
                out.row_mut(r).copy_from_slice(xv.row(i));
            }
        }
        Ok(self.push(out, Op::GatherRows { x, index }, &[x]))
    }

    /// Per-block `scale · q_b k_bᵀ` for consecutive row blocks of height `block`.
    pub fn block_scores(&mut self, q: Var, k: Var, block: usize, scale: T) -> Result<Var> {
        let (qv, kv) = (self.value(q), self.value(k));
        check_blocks(qv, kv, block)?;
        let mut out = DenseMatrix::zeros(qv.rows(), block);
        for b in 0..qv.rows() / block {
            for i in 0..block {
                let qi = qv.row(b * block + i);
                for j in 0..block {
                    let kj = kv.row(b * block + j);
                    let s: T = qi.iter().zip(kj).map(|(&x, &y)| x * y).sum();
                    out[(b * block + i, j)] = s * scale;
                }
            }
        }
        Ok(self.push(out, Op::BlockScores { q, k, block, scale }, &[q, k]))
    }

    /// Per-block `p_b · v_b`, `p` holding `block`-wide weight rows.
    pub fn block_mix(&mut self, p: Var, v: Var, block: usize) -> Result<Var> {
        let (pv, vv) = (self.value(p), self.value(v));
        if pv.cols() != block || pv.rows() != vv.rows() || vv.rows() % block.max(1) != 0 {
            return Err(Error::dim(format!(
                "block_mix {:?} with {:?}, block {block}",
                pv.shape(),
                vv.shape()
            )));
        }
        let mut out = DenseMatrix::zeros(vv.rows(), vv.cols());
        for b in 0..vv.rows() / block {
            for i in 0..block {
                let row = b * block + i;
                for j in 0..block {
                    let w = pv[(row, j)];
                    if w == T::zero() {
                        continue;
                    }
                    let src = vv.row(b * block + j);
                    for (o, &x) in out.row_mut(row).iter_mut().zip(src) {
                        *o += w * x;
                    }
                }
            }
        }
        Ok(self.push(out, Op::BlockMix { p, v, block }, &[p, v]))
    }

    /// Row softmax over entries where `mask` is true; fully masked rows are zero.
    pub fn masked_softmax(&mut self, x: Var, mask: Arc<Vec<bool>>) -> Result<Var> {
        let xv = self.value(x);
        if mask.len() != xv.len() {
            return Err(Error::dim("softmax mask size"));
        }
        let mut out = DenseMatrix::zeros(xv.rows(), xv.cols());
        let c = xv.cols();
        for i in 0..xv.rows() {
            let row = xv.row(i);
            let m = &mask[i * c..(i + 1) * c];
            let max = row
                .iter()
                .zip(m)
                .filter(|(_, &ok)| ok)
                .fold(T::neg_infinity(), |acc, (&v, _)| acc.max(v));
            if max == T::neg_infinity() {
                continue;
            }
            let o = out.row_mut(i);
            let mut total = T::zero();
            for j in 0..c {
                if m[j] {
                    o[j] = (row[j] - max).exp();
                    total += o[j];
                }
            }
            for v in o.iter_mut() {
                *v /= total;
            }
        }
        Ok(self.push(out, Op::MaskedSoftmax { x, mask }, &[x]))
    }

    /// Row-wise layer normalisation with affine `gamma`, `beta` (both 1×cols).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let c = xv.cols();
        if gv.shape() != (1, c) || bv.shape() != (1, c) {
            return Err(Error::dim("layer_norm affine shape"));
        }
        let n = T::of_usize(c);
        let mut xhat = DenseMatrix::zeros(xv.rows(), c);
        let mut inv_std = Vec::with_capacity(xv.rows());
        let mut out = DenseMatrix::zeros(xv.rows(), c);
        for i in 0..xv.rows() {
            let row = xv.row(i);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            for j in 0..c {
                let h = (row[j] - mean) * inv;
                xhat[(i, j)] = h;
                out[(i, j)] = h * gv.data()[j] + bv.data()[j];
            }
        }
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        };
        Ok(self.push(out, op, &[x, gamma, beta]))
    }

    /// `out[b][c] = user_b · items[cands[b][c]]`.
    pub fn candidate_scores(&mut self, user: Var, items: Var, cands: Arc<Vec<Vec<usize>>>) -> Result<Var> {
        let (uv, iv) = (self.value(user), self.value(items));
        if uv.cols() != iv.cols() || cands.len() != uv.rows() {
            return Err(Error::dim("candidate_scores shapes"));
        }
        let width = cands.first().map_or(0, Vec::len);
        let mut out = DenseMatrix::zeros(uv.rows(), width);
        for (b, list) in cands.iter().enumerate() {
            if list.len() != width {
                return Err(Error::dim("ragged candidate lists"));
            }
            for (c, &id) in list.iter().enumerate() {
                if id >= iv.rows() {
                    return Err(Error::Index {
                        index: id,
                        len: iv.rows(),
                    });
                }
                out[(b, c)] = dot(uv.row(b), iv.row(id));
            }
        }
        Ok(self.push(out, Op::CandidateScores { user, items, cands }, &[user, items]))
    }

    /// Mean InfoNCE over rows; column 0 holds the positive score.
    pub fn infonce(&mut self, scores: Var, temperature: T) -> Result<Var> {
        let sv = self.value(scores);
        if sv.cols() < 1 || sv.rows() < 1 || temperature <= T::zero() {
            return Err(Error::Contract("infonce needs scores and τ > 0".into()));
        }
        let inv_tau = T::one() / temperature;
        let mut probs = DenseMatrix::zeros(sv.rows(), sv.cols());
        let mut total = T::zero();
        for b in 0..sv.rows() {
            let row = sv.row(b);
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v * inv_tau));
            for (c, &s) in row.iter().enumerate() {
                probs[(b, c)] = (s * inv_tau - max).exp();
            }
            let z = order_free_sum(probs.row(b));
            for p in probs.row_mut(b) {
                *p /= z;
            }
            total += max + z.ln() - row[0] * inv_tau;
        }
        let loss = DenseMatrix::scalar(total / T::of_usize(sv.rows()));
        Ok(self.push(loss, Op::InfoNce { scores, inv_tau, probs }, &[scores]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = DenseMatrix::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x), &[x])
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let out = DenseMatrix::scalar(self.value(x).data().iter().map(|&v| v * v).sum());
        self.push(out, Op::SumSquares(x), &[x])
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward from a non-scalar {:?} node",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<DenseMatrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(DenseMatrix::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads)?;
        }
        Ok(Gradients { per_node: grads })
    }

    /// Backward pass accumulating into every parameter leaf on this tape.
    ///
    /// Parameters recorded on the tape but unreachable from `loss` receive an
    /// explicit zero gradient.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        let grads = self.backward(loss)?;
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(id) = node.param {
                match &grads.per_node[i] {
                    Some(g) => store.accumulate_grad(id, g)?,
                    None => {
                        let z = DenseMatrix::zeros(node.value.rows(), node.value.cols());
                        store.accumulate_grad(id, &z)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, i: usize, g: &DenseMatrix<T>, grads: &mut [Option<DenseMatrix<T>>]) -> Result<()> {
        let val = |v: Var| -> &DenseMatrix<T> { &self.nodes[v.0].value };
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                if self.wants(a) {
                    accumulate(grads, a, g.matmul_nt(val(b))?)?;
                }
                if self.wants(b) {
                    accumulate(grads, b, val(a).matmul_tn(g)?)?;
                }
            }
            &Op::MatMulNt(a, b) => {
                if self.wants(a) {
                    accumulate(grads, a, g.matmul(val(b))?)?;
                }
                if self.wants(b) {
                    accumulate(grads, b, g.matmul_tn(val(a))?)?;
                }
            }
            &Op::Add(a, b) => {
                if self.wants(a) {
                    accumulate(grads, a, g.clone())?;
                }
                if self.wants(b) {
                    accumulate(grads, b, g.clone())?;
                }
            }
            &Op::AddRow(x, row) => {
                if self.wants(x) {
                    accumulate(grads, x, g.clone())?;
                }
                if self.wants(row) {
                    accumulate(grads, row, g.column_sums())?;
                }
            }
            &Op::Mul(a, b) => {
                if self.wants(a) {
                    accumulate(grads, a, g.hadamard(val(b))?)?;
                }
                if self.wants(b) {
                    accumulate(grads, b, g.hadamard(val(a))?)?;
                }
            }
            &Op::Scale(a, c) => accumulate(grads, a, g.scale(c))?,
            &Op::Relu(x) => {
                let gx = g.zip_map(val(x), "relu", |g, x| if x > T::zero() { g } else { T::zero() })?;
                accumulate(grads, x, gx)?;
            }
            &Op::Softshrink { x, lambda } => {
                let raw = val(lambda).item()?;
                let lam = raw.abs();
                let xv = val(x);
                if self.wants(x) {
                    let gx = g.zip_map(xv, "softshrink", |g, x| {
                        if x.abs() > lam {
                            g
                        } else {
                            T::zero()
                        }
                    })?;
                    accumulate(grads, x, gx)?;
                }
                if self.wants(lambda) {
                    // d|raw|/d raw taken as +1 at raw = 0 so a zero-initialised
                    // threshold can leave the origin.
                    let sign_raw = if raw >= T::zero() { T::one() } else { -T::one() };
                    let mut acc = T::zero();
                    for (&gv, &x) in g.data().iter().zip(xv.data()) {
                        if x > lam {
                            acc -= gv;
                        } else if x < -lam {
                            acc += gv;
                        }
                    }
                    accumulate(grads, lambda, DenseMatrix::scalar(acc * sign_raw))?;
                }
            }
            Op::SpectralEncoding { alpha, sigma, d } => {
                let av = val(*alpha);
                let mut ga = DenseMatrix::zeros(av.rows(), av.cols());
                let s1 = sigma[0];
                for i in 0..*d {
                    let gi = g[(i, i)];
                    let ratio = sigma[i] / s1;
                    let row = if av.rows() == 1 { 0 } else { i };
                    let mut pow = T::one();
                    for k in 0..av.cols() {
                        ga[(row, k)] += gi * s1 * pow;
                        pow *= ratio;
                    }
                }
                accumulate(grads, *alpha, ga)?;
            }
            &Op::ConcatCols(a, b) => {
                let ca = val(a).cols();
                if self.wants(a) {
                    accumulate(grads, a, g.columns(0, ca)?)?;
                }
                if self.wants(b) {
                    accumulate(grads, b, g.columns(ca, g.cols())?)?;
                }
            }
            Op::GatherRows { x, index } => {
                let xv = val(*x);
                let mut gx = DenseMatrix::zeros(xv.rows(), xv.cols());
                for (r, idx) in index.iter().enumerate() {
                    if let Some(src) = *idx {
                        for (o, &v) in gx.row_mut(src).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                accumulate(grads, *x, gx)?;
            }
            &Op::BlockScores { q, k, block, scale } => {
                let (qv, kv) = (val(q), val(k));
                let mut gq = DenseMatrix::zeros(qv.rows(), qv.cols());
                let mut gk = DenseMatrix::zeros(kv.rows(), kv.cols());
                for b in 0..qv.rows() / block {
                    for i in 0..block {
                        let qi = b * block + i;
                        for j in 0..block {
                            let kj = b * block + j;
                            let w = g[(qi, j)] * scale;
                            if w == T::zero() {
                                continue;
                            }
                            for c in 0..qv.cols() {
                                gq[(qi, c)] += w * kv[(kj, c)];
                                gk[(kj, c)] += w * qv[(qi, c)];
                            }
                        }
                    }
                }
                if self.wants(q) {
                    accumulate(grads, q, gq)?;
                }
                if self.wants(k) {
                    accumulate(grads, k, gk)?;
                }
            }
            &Op::BlockMix { p, v, block } => {
                let (pv, vv) = (val(p), val(v));
                let mut gp = DenseMatrix::zeros(pv.rows(), pv.cols());
                let mut gv = DenseMatrix::zeros(vv.rows(), vv.cols());
                for b in 0..vv.rows() / block {
                    for i in 0..block {
                        let row = b * block + i;
                        for j in 0..block {
                            let src = b * block + j;
                            gp[(row, j)] = dot(g.row(row), vv.row(src));
                            let w = pv[(row, j)];
                            if w == T::zero() {
                                continue;
                            }
                            for (o, &gg) in gv.row_mut(src).iter_mut().zip(g.row(row)) {
                                *o += w * gg;
                            }
                        }
                    }
                }
                if self.wants(p) {
                    accumulate(grads, p, gp)?;
                }
                if self.wants(v) {
                    accumulate(grads, v, gv)?;
                }
            }
            Op::MaskedSoftmax { x, mask } => {
                let y = &self.nodes[i].value;
                let c = y.cols();
                let mut gx = DenseMatrix::zeros(y.rows(), c);
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let inner: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    let m = &mask[r * c..(r + 1) * c];
                    let out = gx.row_mut(r);
                    for j in 0..c {
                        if m[j] {
                            out[j] = yr[j] * (gr[j] - inner);
                        }
                    }
                }
                accumulate(grads, *x, gx)?;
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gv = val(*gamma);
                let c = xhat.cols();
                let n = T::of_usize(c);
                if self.wants(*gamma) {
                    accumulate(grads, *gamma, g.hadamard(xhat)?.column_sums())?;
                }
                if self.wants(*beta) {
                    accumulate(grads, *beta, g.column_sums())?;
                }
                if self.wants(*x) {
                    let mut gx = DenseMatrix::zeros(xhat.rows(), c);
                    for r in 0..xhat.rows() {
                        let h = xhat.row(r);
                        let gr = g.row(r);
                        let mut mean_g = T::zero();
                        let mut mean_gh = T::zero();
                        for j in 0..c {
                            let gh = gr[j] * gv.data()[j];
                            mean_g += gh;
                            mean_gh += gh * h[j];
                        }
                        mean_g /= n;
                        mean_gh /= n;
                        let out = gx.row_mut(r);
                        for j in 0..c {
                            let gh = gr[j] * gv.data()[j];
                            out[j] = inv_std[r] * (gh - mean_g - h[j] * mean_gh);
                        }
                    }
                    accumulate(grads, *x, gx)?;
                }
            }
            Op::CandidateScores { user, items, cands } => {
                let (uv, iv) = (val(*user), val(*items));
                let mut gu = DenseMatrix::zeros(uv.rows(), uv.cols());
                let mut gi = DenseMatrix::zeros(iv.rows(), iv.cols());
                for (b, list) in cands.iter().enumerate() {
                    for (c, &id) in list.iter().enumerate() {
                        let w = g[(b, c)];
                        for j in 0..uv.cols() {
                            gu[(b, j)] += w * iv[(id, j)];
                            gi[(id, j)] += w * uv[(b, j)];
                        }
                    }
                }
                if self.wants(*user) {
                    accumulate(grads, *user, gu)?;
                }
                if self.wants(*items) {
                    accumulate(grads, *items, gi)?;
                }
            }
            Op::InfoNce {
                scores,
                inv_tau,
                probs,
            } => {
                let w = g.item()? * *inv_tau / T::of_usize(probs.rows());
                let mut gs = probs.scale(w);
                for b in 0..gs.rows() {
                    gs[(b, 0)] -= w;
                }
                accumulate(grads, *scores, gs)?;
            }
            &Op::Sum(x) => {
                let xv = val(x);
                accumulate(grads, x, DenseMatrix::filled(xv.rows(), xv.cols(), g.item()?))?;
            }
            &Op::SumSquares(x) => {
                let c = g.item()? * T::of(2.0);
                accumulate(grads, x, val(x).scale(c))?;
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<DenseMatrix<T>>], v: Var, g: DenseMatrix<T>) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn check_blocks<T: Scalar>(q: &DenseMatrix<T>, k: &DenseMatrix<T>, block: usize) -> Result<()> {
    if block == 0 || q.shape() != k.shape() || q.rows() % block != 0 {
        return Err(Error::dim(format!(
            "block_scores {:?} with {:?}, block {block}",
            q.shape(),
            k.shape()
        )));
    }
    Ok(())
}

/// `σ₁ · Σ_k α_k (σ_i/σ₁)^k` for `i < d`, with shared or per-row `alpha`.
pub(crate) fn taylor_weights<T: Scalar>(alpha: &DenseMatrix<T>, sigma: &[T], d: usize) -> Result<Vec<T>> {
    let s1 = *sigma
        .first()
        .ok_or_else(|| Error::Singularity("empty spectrum".into()))?;
    if s1 <= T::zero() {
        return Err(Error::Singularity("leading singular value is zero".into()));
    }
    Ok((0..d)
        .map(|i| {
            let row = alpha.row(if alpha.rows() == 1 { 0 } else { i });
            let ratio = sigma[i] / s1;
            let mut pow = T::one();
            let mut acc = T::zero();
            for &a in row {
                acc += a * pow;
                pow *= ratio;
            }
            s1 * acc
        })
        .collect())
}
