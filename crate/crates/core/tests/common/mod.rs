#![allow(dead_code)]

use spectran_core::dataio::{chronological_split, Interaction, InteractionLog, SplitDataset, SplitRatios};
use spectran_core::numkit::DenseMatrix;
use spectran_core::rng::{gaussian, substream, Rng};

pub fn rng(seed: u64) -> Rng {
    substream(seed, "test")
}

pub fn randn(rows: usize, cols: usize, seed: u64) -> DenseMatrix<f64> {
    gaussian(rows, cols, 1.0, &mut rng(seed))
}

/// Log in which user `u` walks the catalog with stride `u % 3 + 1`, one step per hour.
pub fn walk_log(users: usize, items: usize, len: usize) -> InteractionLog {
    let mut records = Vec::new();
    for u in 0..users {
        let stride = u % 3 + 1;
        for t in 0..len {
            records.push(Interaction {
                user: u,
                item: (u + t * stride) % items,
                timestamp: (u * 7 + t * 3600) as i64,
            });
        }
    }
    InteractionLog::from_dense(records, users, items).unwrap()
}

pub fn walk_split(users: usize, items: usize, len: usize, max_len: usize) -> SplitDataset {
    chronological_split(&walk_log(users, items, len), SplitRatios::default(), max_len).unwrap()
}
