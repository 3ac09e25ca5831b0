use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numkit::{DenseMatrix, Tape, Var};
use crate::Scalar;

/// How transformed semantic embeddings combine with ID embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FusionMode {
    /// `E_item = E_s + E_id`.
    #[default]
    Add,
    /// `E_item = [E_s ‖ E_id] P` with a learnable `2d × d` map `P`.
    ConcatProject,
    /// `E_id` starts as a copy of `E_s` and is then trained alone.
    SemanticInit,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::Add => "add",
            FusionMode::ConcatProject => "concat_project",
            FusionMode::SemanticInit => "semantic_init",
        })
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(FusionMode::Add),
            "concat_project" => Ok(FusionMode::ConcatProject),
            "semantic_init" => Ok(FusionMode::SemanticInit),
            _ => Err(Error::Config(format!("unknown fusion mode {s:?}"))),
        }
    }
}

fn check(e_s: (usize, usize), e_id: (usize, usize)) -> Result<()> {
    if e_s != e_id {
        return Err(Error::dim(format!("E_s {e_s:?} vs E_id {e_id:?}")));
    }
    Ok(())
}

/// Item table from `E_s` and `E_id`. Under `SemanticInit` the table is `E_id`
/// itself, which was seeded from `E_s`.
pub fn fuse_embeddings<T: Scalar>(
    e_s: &DenseMatrix<T>,
    e_id: &DenseMatrix<T>,
    mode: FusionMode,
    projection: Option<&DenseMatrix<T>>,
) -> Result<DenseMatrix<T>> {
    check(e_s.shape(), e_id.shape())?;
    match mode {
        FusionMode::Add => e_s.add(e_id),
        FusionMode::SemanticInit => Ok(e_id.clone()),
        FusionMode::ConcatProject => {
            let p = projection.ok_or_else(|| Error::Config("concat_project needs a projection".into()))?;
            if p.shape() != (2 * e_s.cols(), e_s.cols()) {
                return Err(Error::dim(format!(
                    "projection {:?} for width {}",
                    p.shape(),
                    e_s.cols()
                )));
            }
            e_s.hcat(e_id)?.matmul(p)
        }
    }
}

/// Tape version of [`fuse_embeddings`].
pub fn fuse_graph<T: Scalar>(
    tape: &mut Tape<T>,
    e_s: Var,
    e_id: Var,
    mode: FusionMode,
    projection: Option<Var>,
) -> Result<Var> {
    check(tape.value(e_s).shape(), tape.value(e_id).shape())?;
    match mode {
        FusionMode::Add => tape.add(e_s, e_id),
        FusionMode::SemanticInit => Ok(e_id),
        FusionMode::ConcatProject => {
            let p = projection.ok_or_else(|| Error::Config("concat_project needs a projection".into()))?;
            let cat = tape.concat_cols(e_s, e_id)?;
            tape.matmul(cat, p)
        }
    }
}

/// `[I; I]`, which makes concatenation-projection start out as addition.
pub fn stacked_identity<T: Scalar>(d: usize) -> DenseMatrix<T> {
    DenseMatrix::from_fn(2 * d, d, |i, j| if i % d == j { T::one() } else { T::zero() })
}
