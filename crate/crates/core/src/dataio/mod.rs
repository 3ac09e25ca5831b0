//! Embedding matrices and interaction logs on disk, chronological
//! leave-one-out splits, and the synthetic benchmark generator.

mod emb;
mod interactions;
mod split;
mod synth;

pub use emb::{load_embedding_matrix, read_emb1, read_emb1_record, write_emb1, write_emb1_record, EMB1_MAGIC};
pub use interactions::{
    load_interactions, parse_interactions, write_interactions, Interaction, InteractionLog, MIN_SEQUENCE_LEN,
};
pub use split::{chronological_split, DatasetStats, Partition, SplitDataset, SplitRatios, UserSequence};
pub use synth::{synth_generate, SynthConfig, SynthOutput};
