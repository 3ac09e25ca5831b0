use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numkit::ops::order_free_sum;
use crate::numkit::DenseMatrix;
use crate::rng::Rng;
use crate::Scalar;

pub const NUM_NEGATIVES: usize = 64;

/// Training examples with their sampled negatives.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Batch {
    pub histories: Vec<Vec<usize>>,
    pub targets: Vec<usize>,
    pub negatives: Vec<Vec<usize>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn history_slices(&self) -> Vec<&[usize]> {
        self.histories.iter().map(Vec::as_slice).collect()
    }

    /// Per example: the target followed by its negatives.
    pub fn candidates(&self) -> Vec<Vec<usize>> {
        self.targets
            .iter()
            .zip(&self.negatives)
            .map(|(&t, neg)| std::iter::once(t).chain(neg.iter().copied()).collect())
            .collect()
    }
}

/// `score[b][c] = user_repr_b · E_item[candidates[b][c]]`.
pub fn score_items<T: Scalar>(user_repr: &DenseMatrix<T>, e_item: &DenseMatrix<T>, candidates: &[Vec<usize>]) -> Result<DenseMatrix<T>> {
    if user_repr.cols() != e_item.cols() || candidates.len() != user_repr.rows() {
        return Err(Error::dim(format!(
            "users {:?}, items {:?}, {} candidate lists",
            user_repr.shape(),
            e_item.shape(),
            candidates.len()
        )));
    }
    let width = candidates.first().map_or(0, Vec::len);
    let mut out = DenseMatrix::zeros(user_repr.rows(), width);
    for (b, list) in candidates.iter().enumerate() {
        if list.len() != width {
            return Err(Error::dim("ragged candidate lists"));
        }
        for (c, &id) in list.iter().enumerate() {
            if id >= e_item.rows() {
                return Err(Error::Index {
                    index: id,
                    len: e_item.rows(),
                });
            }
            out[(b, c)] = user_repr.row(b).iter().zip(e_item.row(id)).map(|(&a, &e)| a * e).sum();
        }
    }
    Ok(out)
}

/// `−log(exp(s⁺/τ) / (exp(s⁺/τ) + Σ_j exp(s_j/τ)))`, max-stabilised and
/// invariant to the order of `negatives`.
pub fn infonce_loss<T: Scalar>(pos: T, negatives: &[T], temperature: T) -> Result<T> {
    if !(temperature > T::zero()) {
        return Err(Error::Contract("temperature must be positive".into()));
    }
    let inv = T::one() / temperature;
    let max = negatives.iter().fold(pos * inv, |m, &s| m.max(s * inv));
    let exps: Vec<T> = std::iter::once(pos)
        .chain(negatives.iter().copied())
        .map(|s| (s * inv - max).exp())
        .collect();
    let z = order_free_sum(&exps);
    Ok(max + z.ln() - pos * inv)
}

/// `k` ids uniform on `[0, n) \ {target}`, with replacement.
pub fn sample_negatives(rng: &mut Rng, target: usize, n: usize, k: usize) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::Sampling(format!("cannot draw negatives from a catalog of {n}")));
    }
    if target >= n {
        return Err(Error::Index { index: target, len: n });
    }
    Ok((0..k)
        .map(|_| {
            let x = rng.random_range(0..n - 1);
            if x >= target {
                x + 1
            } else {
                x
            }
        })
        .collect())
}

/// Like [`sample_negatives`] but also avoiding every id in `exclude`
/// (rejection sampling).
pub fn sample_negatives_excluding(rng: &mut Rng, target: usize, n: usize, k: usize, exclude: &[usize]) -> Result<Vec<usize>> {
    let mut banned = vec![false; n];
    if target >= n {
        return Err(Error::Index { index: target, len: n });
    }
    banned[target] = true;
    for &e in exclude {
        if e < n {
            banned[e] = true;
        }
    }
    if banned.iter().all(|&b| b) {
        return Err(Error::Sampling("every item is excluded".into()));
    }
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let x = rng.random_range(0..n);
        if !banned[x] {
            out.push(x);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn infonce_hand_values() {
        assert!((infonce_loss(1.3, &[1.3], 1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((infonce_loss(0.0, &[0.0; 64], 1.0).unwrap() - 65f64.ln()).abs() < 1e-12);
        assert!(infonce_loss(1e4, &[0.0; 64], 1.0).unwrap() < 1e-12);
        assert!(infonce_loss(1e4f64, &[-1e4; 3], 0.5).unwrap().is_finite());
    }

    #[test]
    fn forced_negative_when_two_items() {
        let mut rng = substream(1, "neg");
        assert!(sample_negatives(&mut rng, 0, 2, 64).unwrap().iter().all(|&x| x == 1));
        assert!(matches!(sample_negatives(&mut rng, 0, 1, 64), Err(Error::Sampling(_))));
    }

    #[test]
    fn fixed_seed_reproduces_samples() {
        let a = sample_negatives(&mut substream(9, "neg"), 3, 50, 64).unwrap();
        let b = sample_negatives(&mut substream(9, "neg"), 3, 50, 64).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| x != 3 && x < 50));
    }

    #[test]
    fn exclusion_respected() {
        let mut rng = substream(2, "neg");
        let s = sample_negatives_excluding(&mut rng, 0, 5, 100, &[1, 2]).unwrap();
        assert!(s.iter().all(|&x| x == 3 || x == 4));
        assert!(sample_negatives_excluding(&mut rng, 0, 3, 1, &[1, 2]).is_err());
    }

    #[test]
    fn orthogonal_and_self_scores() {
        let u = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![3.0, 4.0]]).unwrap();
        let e = DenseMatrix::from_rows(&[vec![0.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let s = score_items(&u, &e, &[vec![0], vec![1]]).unwrap();
        assert_eq!(s.data(), &[0.0, 25.0]);
        assert!(matches!(score_items(&u, &e, &[vec![2], vec![0]]), Err(Error::Index { .. })));
    }
}
