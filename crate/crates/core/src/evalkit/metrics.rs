use serde::Serialize;

use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;
use crate::Scalar;

/// 1-based rank of `target` among items not in `removed`, by descending
/// score with ties broken by ascending item id. Duplicates in `removed` are
/// ignored.
pub fn rank_from_scores<T: Scalar>(scores: &[T], target: usize, removed: &[usize]) -> Result<usize> {
    if target >= scores.len() {
        return Err(Error::Index {
            index: target,
            len: scores.len(),
        });
    }
    if removed.contains(&target) {
        return Err(Error::Contract(format!("target {target} is in the removed set")));
    }
    let s = scores[target];
    if s.is_nan() {
        return Err(Error::Numerical(format!("score of target {target} is NaN")));
    }
    let mut ahead = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > s || (v == s && i < target) {
            ahead += 1;
        }
    }
    let mut removed = removed.to_vec();
    removed.sort_unstable();
    removed.dedup();
    for r in removed {
        if r < scores.len() {
            let v = scores[r];
            if v > s || (v == s && r < target) {
                ahead -= 1;
            }
        }
    }
    Ok(ahead + 1)
}

/// Rank of `target` for one user representation against the full table.
pub fn rank_target<T: Scalar>(user_repr: &[T], e_item: &DenseMatrix<T>, target: usize, history: &[usize]) -> Result<usize> {
    if user_repr.len() != e_item.cols() {
        return Err(Error::dim(format!(
            "user vector of length {} against items of width {}",
            user_repr.len(),
            e_item.cols()
        )));
    }
    let scores: Vec<T> = (0..e_item.rows())
        .map(|i| e_item.row(i).iter().zip(user_repr).map(|(&a, &b)| a * b).sum())
        .collect();
    rank_from_scores(&scores, target, history)
}

pub fn hr_at_k(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0
    } else {
        0.0
    }
}

pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// Mean HR and NDCG at 10 and 20 over evaluated users.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub hr10: f64,
    pub hr20: f64,
    pub ndcg10: f64,
    pub ndcg20: f64,
    pub users: usize,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "hr10,hr20,ndcg10,ndcg20,users";

    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::Evaluation("no users to evaluate".into()));
        }
        let n = ranks.len() as f64;
        let mean = |f: &dyn Fn(usize) -> f64| ranks.iter().map(|&r| f(r)).sum::<f64>() / n;
        Ok(Self {
            hr10: mean(&|r| hr_at_k(r, 10)),
            hr20: mean(&|r| hr_at_k(r, 20)),
            ndcg10: mean(&|r| ndcg_at_k(r, 10)),
            ndcg20: mean(&|r| ndcg_at_k(r, 20)),
            users: ranks.len(),
        })
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.hr10, self.hr20, self.ndcg10, self.ndcg20, self.users)
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }

    /// HR@10 ≤ HR@20, NDCG@10 ≤ NDCG@20, NDCG@K ≤ HR@K, all within `[0, 1]`.
    pub fn is_consistent(&self) -> bool {
        let vals = [self.hr10, self.hr20, self.ndcg10, self.ndcg20];
        vals.iter().all(|v| (0.0..=1.0).contains(v))
            && self.hr10 <= self.hr20
            && self.ndcg10 <= self.ndcg20
            && self.ndcg10 <= self.hr10
            && self.ndcg20 <= self.hr20
    }
}
