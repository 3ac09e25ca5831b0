use std::sync::Arc;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numkit::{DenseMatrix, ParamId, ParamStore, Tape, Var};
use crate::rng::{gaussian, xavier_uniform, Rng};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackboneConfig {
    pub d: usize,
    pub blocks: usize,
    pub heads: usize,
    pub max_len: usize,
    /// Drop probability on attention weights and feed-forward outputs.
    pub dropout: f64,
    pub weight_decay: f64,
    pub ln_eps: f64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            d: 128,
            blocks: 2,
            heads: 1,
            max_len: 10,
            dropout: 0.1,
            weight_decay: 0.0,
            ln_eps: 1e-8,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.max_len == 0 || self.blocks == 0 {
            return Err(Error::Config("d, blocks and max_len must be positive".into()));
        }
        if self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::Config(format!("d={} not divisible by heads={}", self.d, self.heads)));
        }
        if self.heads != 1 {
            return Err(Error::Unsupported(format!("{} attention heads; only 1 is implemented", self.heads)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight decay must be finite and non-negative".into()));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::Config("layer-norm epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// One post-norm transformer block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub ln1_gamma: ParamId,
    pub ln1_beta: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub ln2_gamma: ParamId,
    pub ln2_beta: ParamId,
}

/// Item ID table, absolute position table and transformer blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SasrecParams {
    pub item: ParamId,
    pub position: ParamId,
    pub blocks: Vec<BlockParams>,
}

pub const ITEM_TABLE: &str = "item.embedding";
const POSITION_TABLE: &str = "backbone.position";
const EMBED_STD: f64 = 0.02;

fn block_names(b: usize) -> [String; 11] {
    ["wq", "wk", "wv", "ln1.gamma", "ln1.beta", "w1", "b1", "w2", "b2", "ln2.gamma", "ln2.beta"]
        .map(|s| format!("backbone.block{b}.{s}"))
}

impl SasrecParams {
    /// `E_id ~ N(0, 0.02²)`, positions likewise, Glorot weights, unit
    /// layer-norm scales and zero offsets.
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, cfg: &BackboneConfig, num_items: usize, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        if num_items == 0 {
            return Err(Error::Config("empty catalog".into()));
        }
        let d = cfg.d;
        let item = store.insert(ITEM_TABLE, gaussian(num_items, d, EMBED_STD, rng))?;
        let position = store.insert(POSITION_TABLE, gaussian(cfg.max_len, d, EMBED_STD, rng))?;
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for b in 0..cfg.blocks {
            let n = block_names(b);
            let ones = || DenseMatrix::filled(1, d, T::one());
            let zeros = || DenseMatrix::zeros(1, d);
            blocks.push(BlockParams {
                wq: store.insert(&n[0], xavier_uniform(d, d, rng))?,
                wk: store.insert(&n[1], xavier_uniform(d, d, rng))?,
                wv: store.insert(&n[2], xavier_uniform(d, d, rng))?,
                ln1_gamma: store.insert(&n[3], ones())?,
                ln1_beta: store.insert(&n[4], zeros())?,
                w1: store.insert(&n[5], xavier_uniform(d, d, rng))?,
                b1: store.insert(&n[6], zeros())?,
                w2: store.insert(&n[7], xavier_uniform(d, d, rng))?,
                b2: store.insert(&n[8], zeros())?,
                ln2_gamma: store.insert(&n[9], ones())?,
                ln2_beta: store.insert(&n[10], zeros())?,
            });
        }
        Ok(Self { item, position, blocks })
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut v = vec![self.item, self.position];
        for b in &self.blocks {
            v.extend([
                b.wq, b.wk, b.wv, b.ln1_gamma, b.ln1_beta, b.w1, b.b1, b.w2, b.b2, b.ln2_gamma, b.ln2_beta,
            ]);
        }
        v
    }

    pub fn num_scalars<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        self.ids().iter().map(|&id| store.value(id).len()).sum()
    }

    pub fn max_len<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        store.value(self.position).rows()
    }
}

/// Embedded, left-padded batch of `batch` sequences of length `len`; row
/// `b·len + p` holds position `p` of sequence `b`.
pub struct Embedded {
    pub x: Var,
    pub batch: usize,
    pub len: usize,
    /// Whether each row holds a real item.
    pub valid: Vec<bool>,
}

/// Looks up `E_item[item] + P[position]` for left-padded histories; padded
/// positions are zero rows.
pub fn embed_sequence<T: Scalar>(
    tape: &mut Tape<T>,
    items: Var,
    store: &ParamStore<T>,
    params: &SasrecParams,
    histories: &[&[usize]],
) -> Result<Embedded> {
    let len = params.max_len(store);
    let n = tape.value(items).rows();
    let mut item_idx = Vec::with_capacity(histories.len() * len);
    let mut pos_idx = Vec::with_capacity(histories.len() * len);
    let mut valid = Vec::with_capacity(histories.len() * len);
    for h in histories {
        let h = &h[h.len().saturating_sub(len)..];
        let pad = len - h.len();
        for p in 0..len {
            if p < pad {
                item_idx.push(None);
                pos_idx.push(None);
                valid.push(false);
            } else {
                let id = h[p - pad];
                if id >= n {
                    return Err(Error::Index { index: id, len: n });
                }
                item_idx.push(Some(id));
                pos_idx.push(Some(p));
                valid.push(true);
            }
        }
    }
    let rows = tape.gather_rows(items, item_idx)?;
    let pos_table = tape.param(store, params.position);
    let pos = tape.gather_rows(pos_table, pos_idx)?;
    let x = tape.add(rows, pos)?;
    Ok(Embedded {
        x,
        batch: histories.len(),
        len,
        valid,
    })
}

fn dropout_mask<T: Scalar>(rows: usize, cols: usize, p: f64, rng: &mut Rng) -> DenseMatrix<T> {
    let keep = T::of(1.0 / (1.0 - p));
    DenseMatrix::from_fn(rows, cols, |_, _| if rng.random::<f64>() < p { T::zero() } else { keep })
}

/// Runs the transformer blocks and returns every position (`batch·len × d`).
/// Dropout is active exactly when `dropout` supplies a generator.
pub fn encode_sequence<T: Scalar>(
    tape: &mut Tape<T>,
    emb: &Embedded,
    store: &ParamStore<T>,
    params: &SasrecParams,
    cfg: &BackboneConfig,
    mut dropout: Option<&mut Rng>,
) -> Result<Var> {
    let (b, l) = (emb.batch, emb.len);
    let d = tape.value(emb.x).cols();
    let rows = b * l;
    let mut mask = vec![false; rows * l];
    for s in 0..b {
        for i in 0..l {
            for j in 0..=i {
                mask[(s * l + i) * l + j] = emb.valid[s * l + j];
            }
        }
    }
    let mask = Arc::new(mask);
    let timeline = tape.constant(DenseMatrix::from_fn(rows, d, |r, _| {
        if emb.valid[r] {
            T::one()
        } else {
            T::zero()
        }
    }));
    let eps = T::of(cfg.ln_eps);
    let scale = T::of(1.0 / (d as f64).sqrt());
    let p = cfg.dropout;

    let mut x = emb.x;
    for blk in &params.blocks {
        let wq = tape.param(store, blk.wq);
        let wk = tape.param(store, blk.wk);
        let wv = tape.param(store, blk.wv);
        let q = tape.matmul(x, wq)?;
        let k = tape.matmul(x, wk)?;
        let v = tape.matmul(x, wv)?;
        let scores = tape.block_scores(q, k, l, scale)?;
        let mut attn = tape.masked_softmax(scores, mask.clone())?;
        if let Some(rng) = dropout.as_deref_mut() {
            if p > 0.0 {
                let m = tape.constant(dropout_mask(rows, l, p, rng));
                attn = tape.mul(attn, m)?;
            }
        }
        let mixed = tape.block_mix(attn, v, l)?;
        let res = tape.add(x, mixed)?;
        let (g1, b1) = (tape.param(store, blk.ln1_gamma), tape.param(store, blk.ln1_beta));
        let h = tape.layer_norm(res, g1, b1, eps)?;

        let w1 = tape.param(store, blk.w1);
        let bias1 = tape.param(store, blk.b1);
        let w2 = tape.param(store, blk.w2);
        let bias2 = tape.param(store, blk.b2);
        let f = tape.matmul(h, w1)?;
        let f = tape.add_row(f, bias1)?;
        let f = tape.relu(f);
        let f = tape.matmul(f, w2)?;
        let mut f = tape.add_row(f, bias2)?;
        if let Some(rng) = dropout.as_deref_mut() {
            if p > 0.0 {
                let m = tape.constant(dropout_mask(rows, d, p, rng));
                f = tape.mul(f, m)?;
            }
        }
        let res = tape.add(h, f)?;
        let (g2, b2) = (tape.param(store, blk.ln2_gamma), tape.param(store, blk.ln2_beta));
        let out = tape.layer_norm(res, g2, b2, eps)?;
        x = tape.mul(out, timeline)?;
    }
    Ok(x)
}

/// Final-position rows (`batch × d`) of an encoded batch.
pub fn last_positions<T: Scalar>(tape: &mut Tape<T>, encoded: Var, batch: usize, len: usize) -> Result<Var> {
    tape.gather_rows(encoded, (0..batch).map(|b| Some(b * len + len - 1)).collect())
}
