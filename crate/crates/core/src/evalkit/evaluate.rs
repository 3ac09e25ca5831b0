use rayon::prelude::*;

use super::metrics::{rank_from_scores, MetricsRow};
use crate::dataio::{Partition, SplitDataset, UserSequence};
use crate::error::{Error, Result};
use crate::numkit::{exec, DenseMatrix};
use crate::Scalar;

/// Anything that scores the full catalog for a batch of histories.
pub trait Scorer<T: Scalar> {
    fn num_items(&self) -> usize;

    /// `histories.len() × num_items` score matrix.
    fn score_histories(&self, histories: &[&[usize]]) -> Result<DenseMatrix<T>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalOptions {
    /// Remove items the user already interacted with (other than the target) from the ranking.
    pub exclude_history: bool,
    pub batch_size: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            exclude_history: true,
            batch_size: 256,
        }
    }
}

/// Rank of each user's final item given its latest `max_len` predecessors.
pub fn evaluate_users<T, S>(scorer: &S, users: &[&UserSequence], max_len: usize, opts: &EvalOptions) -> Result<Vec<usize>>
where
    T: Scalar,
    S: Scorer<T> + Sync,
{
    let chunk = opts.batch_size.max(1);
    let run = |group: &[&UserSequence]| -> Result<Vec<usize>> {
        let histories: Vec<&[usize]> = group.iter().map(|u| u.history(max_len)).collect();
        let scores = scorer.score_histories(&histories)?;
        if scores.shape() != (group.len(), scorer.num_items()) {
            return Err(Error::dim(format!(
                "scorer returned {:?} for {} users and {} items",
                scores.shape(),
                group.len(),
                scorer.num_items()
            )));
        }
        group
            .iter()
            .enumerate()
            .map(|(b, u)| {
                let target = u.target();
                let removed: Vec<usize> = if opts.exclude_history {
                    u.items[..u.items.len() - 1].iter().copied().filter(|&i| i != target).collect()
                } else {
                    Vec::new()
                };
                rank_from_scores(scores.row(b), target, &removed)
            })
            .collect()
    };
    let per_chunk: Vec<Result<Vec<usize>>> = if exec::parallel() {
        users.par_chunks(chunk).map(run).collect()
    } else {
        users.chunks(chunk).map(run).collect()
    };
    let mut ranks = Vec::with_capacity(users.len());
    for r in per_chunk {
        ranks.extend(r?);
    }
    Ok(ranks)
}

/// Mean metrics over one partition of `split`.
pub fn evaluate_split<T, S>(scorer: &S, split: &SplitDataset, partition: Partition, opts: &EvalOptions) -> Result<MetricsRow>
where
    T: Scalar,
    S: Scorer<T> + Sync,
{
    let users: Vec<&UserSequence> = split.partition(partition).collect();
    if users.is_empty() {
        return Err(Error::Evaluation(format!("partition {partition:?} is empty")));
    }
    let ranks = evaluate_users(scorer, &users, split.max_len(), opts)?;
    MetricsRow::from_ranks(&ranks)
}
