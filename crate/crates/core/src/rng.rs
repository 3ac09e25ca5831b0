//! Named random sub-streams derived from a single run seed.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numkit::DenseMatrix;
use crate::Scalar;

pub type Rng = ChaCha8Rng;

/// Stream names used by the pipeline.
pub mod streams {
    pub const INIT: &str = "init";
    pub const NEGATIVES: &str = "negatives";
    pub const DROPOUT: &str = "dropout";
    pub const SHUFFLE: &str = "shuffle";
    pub const SYNTH: &str = "synth";
}

/// Deterministic generator for `name` under `seed`.
///
/// Each name selects its own ChaCha stream, so consuming one stream never
/// shifts another.
pub fn substream(seed: u64, name: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// Matrix with i.i.d. `N(0, std²)` entries, drawn row-major.
pub fn gaussian<T: Scalar>(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> DenseMatrix<T> {
    DenseMatrix::from_fn(rows, cols, |_, _| T::of(std * rng.sample::<f64, _>(StandardNormal)))
}

/// Glorot-uniform `fan_in × fan_out` matrix.
pub fn xavier_uniform<T: Scalar>(fan_in: usize, fan_out: usize, rng: &mut Rng) -> DenseMatrix<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    DenseMatrix::from_fn(fan_in, fan_out, |_, _| T::of(rng.random_range(-bound..bound)))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
