//! Spectral-aware adapters for injecting high-dimensional semantic item
//! embeddings into a low-dimensional sequential recommender.
//!
//! The crate is organised bottom-up:
//!
//! * [`numkit`]: dense matrices, a recorded-tape gradient engine, Adam.
//! * [`dataio`]: embedding/interaction files, chronological splits, synthetic data.
//! * [`spectral`]: SVD, the static spectral transforms and the collapse diagnostic.
//! * [`adapter`]: the SpecTran projection, the MLP baseline, fusion, checkpoints.
//! * [`recmodel`]: SASRec-style causal self-attention backbone and InfoNCE.
//! * [`evalkit`]: leave-one-out ranking metrics and early stopping.
//! * [`model`] / [`train`]: the assembled recommender and its training loop.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision used by the training pipeline.

pub mod adapter;
pub mod dataio;
pub mod error;
pub mod evalkit;
pub mod model;
pub mod numkit;
pub mod recmodel;
pub mod rng;
pub mod scalar;
pub mod spectral;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Matrix type used throughout the training pipeline.
pub type Matrix = numkit::DenseMatrix<f64>;
/// Single-precision matrix, the on-disk precision of EMB1 files.
pub type Matrix32 = numkit::DenseMatrix<f32>;
pub type Params = numkit::ParamStore<f64>;
pub type Factors = spectral::SvdFactors<f64>;
pub type Model = model::SeqRecModel<f64>;
