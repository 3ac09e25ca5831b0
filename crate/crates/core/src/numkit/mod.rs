//! Dense linear algebra, elementwise activations, a recorded-tape gradient
//! engine and the Adam update rule.

mod adam;
mod gradcheck;
pub mod linalg;
mod matrix;
pub(crate) mod ops;
mod params;
pub(crate) mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_gradcheck, relative_error, GradCheckReport};
pub use matrix::DenseMatrix;
pub use ops::{relu, softshrink, softshrink_scalar};
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};

/// Execution mode switch.
///
/// Deterministic mode (the default) runs every kernel single-threaded.
/// Parallel mode splits matmul output rows across rayon workers; each output
/// element is still reduced in the same order.
pub mod exec {
    use std::sync::atomic::{AtomicBool, Ordering};

    static PARALLEL: AtomicBool = AtomicBool::new(false);

    pub fn set_parallel(on: bool) {
        PARALLEL.store(on, Ordering::Relaxed);
    }

    pub fn parallel() -> bool {
        PARALLEL.load(Ordering::Relaxed)
    }
}
