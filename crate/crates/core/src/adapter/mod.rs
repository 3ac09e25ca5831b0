//! Semantic-embedding adapters: the spectral-attention transform with its
//! Taylor positional encoding, the MLP baseline, fusion with ID embeddings,
//! and the checkpoint format shared by all trainable parameters.

mod checkpoint;
mod fusion;
mod mlp;
mod spectran;

pub use checkpoint::{Checkpoint, CHECKPOINT_HEADER};
pub use fusion::{fuse_embeddings, fuse_graph, stacked_identity, FusionMode};
pub use mlp::{mlp_project, Activation, MlpAdapterParams};
pub use spectran::{
    build_positional_encoding, spectral_weight_report, spectran_project, taylor_diag, weight_totals, SpecTranConfig,
    SpecTranParams, SpectralWeightReport, TaylorMode, MAX_TAYLOR_ORDER,
};
