//! Causal self-attention sequence encoder, dot-product item scoring and the
//! sampled-softmax training objective.

mod backbone;
mod objective;

pub use backbone::{embed_sequence, ITEM_TABLE, encode_sequence, last_positions, BackboneConfig, BlockParams, Embedded, SasrecParams};
pub use objective::{infonce_loss, sample_negatives, sample_negatives_excluding, score_items, Batch, NUM_NEGATIVES};
