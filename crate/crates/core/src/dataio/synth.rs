use rand::Rng;
use rand_distr::StandardNormal;

use super::interactions::{Interaction, InteractionLog, MIN_SEQUENCE_LEN};
use crate::error::{Error, Result};
use crate::numkit::linalg::householder_qr;
use crate::numkit::DenseMatrix;
use crate::rng::{streams, substream, Rng as StreamRng};

/// Synthetic benchmark with a planted geometric singular spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub items: usize,
    pub users: usize,
    /// Semantic embedding width `l`.
    pub dim: usize,
    /// Latent rank `k`.
    pub rank: usize,
    /// Geometric decay of the planted singular values, in `(0, 1]`.
    pub decay: f64,
    /// Leading singular value; `None` scales the spectrum so that the
    /// noiseless matrix has unit mean squared row norm.
    pub leading: Option<f64>,
    /// Standard deviation of i.i.d. Gaussian noise added to each entry.
    pub noise: f64,
    pub min_seq_len: usize,
    pub max_seq_len: usize,
    /// Standard deviation of each user latent coordinate.
    pub preference_scale: f64,
    /// Per-step innovation weight of the user latent random walk, in `[0, 1]`.
    pub drift: f64,
    pub seed: u64,
}

/// The desk-scale benchmark: 2000 items, 256-dim embeddings of rank 32.
impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            items: 2000,
            users: 3000,
            dim: 256,
            rank: 32,
            decay: 0.85,
            leading: None,
            noise: 0.01,
            min_seq_len: 5,
            max_seq_len: 12,
            preference_scale: 6.0,
            drift: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.items == 0 || self.dim == 0 || self.users == 0 {
            return bad("items, users and dim must be positive".into());
        }
        if self.rank == 0 || self.rank > self.items.min(self.dim) {
            return bad(format!(
                "rank {} must lie in 1..=min(items {}, dim {})",
                self.rank, self.items, self.dim
            ));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay {} outside (0, 1]", self.decay));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) || !(self.preference_scale >= 0.0) {
            return bad("noise and preference scale must be finite and non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.drift) {
            return bad(format!("drift {} outside [0, 1]", self.drift));
        }
        if let Some(s) = self.leading {
            if !(s > 0.0 && s.is_finite()) {
                return bad("leading singular value must be positive".into());
            }
        }
        if self.min_seq_len < MIN_SEQUENCE_LEN || self.min_seq_len > self.max_seq_len || self.max_seq_len > self.items {
            return bad(format!(
                "sequence lengths {}..={} must satisfy {MIN_SEQUENCE_LEN} <= min <= max <= items",
                self.min_seq_len, self.max_seq_len
            ));
        }
        Ok(())
    }

    /// Planted singular values `s₁·decayⁱ` for `i < k`.
    pub fn planted_spectrum(&self) -> Vec<f64> {
        let k = self.rank;
        let s1 = self.leading.unwrap_or_else(|| {
            let energy: f64 = (0..k).map(|i| self.decay.powi(2 * i as i32)).sum();
            (self.items as f64 / energy).sqrt()
        });
        (0..k).map(|i| s1 * self.decay.powi(i as i32)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub embeddings: DenseMatrix<f64>,
    pub log: InteractionLog,
    pub planted: Vec<f64>,
}

/// Generates `E = U₀ diag(s) V₀ᵀ + noise` and user sequences whose next item
/// is drawn from `softmax(u · z_i)` over unseen items, where `z_i` is row `i`
/// of the first `k` left singular directions.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, streams::SYNTH);
    let (n, l, k) = (cfg.items, cfg.dim, cfg.rank);

    let u0 = random_orthonormal(n, k, &mut rng)?;
    let v0 = random_orthonormal(l, k, &mut rng)?;
    let planted = cfg.planted_spectrum();
    let mut us = u0.clone();
    for i in 0..n {
        for (v, &s) in us.row_mut(i).iter_mut().zip(&planted) {
            *v *= s;
        }
    }
    let mut embeddings = us.matmul_nt(&v0)?;
    if cfg.noise > 0.0 {
        for v in embeddings.data_mut() {
            *v += cfg.noise * rng.sample::<f64, _>(StandardNormal);
        }
    }

    let latent_scale = (n as f64 / k as f64).sqrt();
    let z = u0.scale(latent_scale);
    let keep = (1.0 - cfg.drift * cfg.drift).sqrt();
    let mut records = Vec::new();
    let mut logits = vec![0.0; n];
    let mut seen = vec![false; n];
    for user in 0..cfg.users {
        let len = rng.random_range(cfg.min_seq_len..=cfg.max_seq_len);
        let mut pref: Vec<f64> = (0..k)
            .map(|_| cfg.preference_scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut ts: i64 = rng.random_range(0..1_000_000);
        let mut chosen = Vec::with_capacity(len);
        for step in 0..len {
            for (i, out) in logits.iter_mut().enumerate() {
                *out = if seen[i] {
                    f64::NEG_INFINITY
                } else {
                    z.row(i).iter().zip(&pref).map(|(a, b)| a * b).sum()
                };
            }
            let item = sample_softmax(&logits, &mut rng);
            seen[item] = true;
            chosen.push(item);
            records.push(Interaction {
                user,
                item,
                timestamp: ts,
            });
            ts += rng.random_range(1..=3600);
            if step + 1 < len && cfg.drift > 0.0 {
                for p in &mut pref {
                    *p = keep * *p + cfg.drift * cfg.preference_scale * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        for i in chosen {
            seen[i] = false;
        }
    }
    let log = InteractionLog::from_dense(records, cfg.users, n)?;
    Ok(SynthOutput {
        embeddings,
        log,
        planted,
    })
}

fn random_orthonormal(rows: usize, cols: usize, rng: &mut StreamRng) -> Result<DenseMatrix<f64>> {
    let g = DenseMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(householder_qr(&g)?.0)
}

fn sample_softmax(logits: &[f64], rng: &mut StreamRng) -> usize {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|&x| (x - max).exp()).sum();
    let mut draw = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &x) in logits.iter().enumerate() {
        if x == f64::NEG_INFINITY {
            continue;
        }
        last = i;
        draw -= (x - max).exp();
        if draw < 0.0 {
            return i;
        }
    }
    last
}
