use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;
use crate::Scalar;

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learnable tensors with one gradient buffer each.
///
/// Values sit behind `Arc` so a tape can hold them without copying; the
/// optimizer writes through [`Arc::make_mut`] once the tape is gone.
#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Arc<DenseMatrix<T>>>,
    grads: Vec<DenseMatrix<T>>,
    populated: Vec<bool>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            populated: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: DenseMatrix<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter name {name}")));
        }
        let id = self.values.len();
        self.grads.push(DenseMatrix::zeros(value.rows(), value.cols()));
        self.values.push(Arc::new(value));
        self.populated.push(false);
        self.index.insert(name.clone(), id);
        self.names.push(name);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &DenseMatrix<T> {
        &self.values[id.0]
    }

    pub(crate) fn shared(&self, id: ParamId) -> Arc<DenseMatrix<T>> {
        Arc::clone(&self.values[id.0])
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut DenseMatrix<T> {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn set(&mut self, id: ParamId, value: DenseMatrix<T>) -> Result<()> {
        if value.shape() != self.values[id.0].shape() {
            return Err(Error::dim(format!(
                "parameter {} has shape {:?}, got {:?}",
                self.names[id.0],
                self.values[id.0].shape(),
                value.shape()
            )));
        }
        self.values[id.0] = Arc::new(value);
        Ok(())
    }

    pub fn grad(&self, id: ParamId) -> &DenseMatrix<T> {
        &self.grads[id.0]
    }

    pub fn has_grad(&self, id: ParamId) -> bool {
        self.populated[id.0]
    }

    /// Adds `g` into the gradient buffer of `id` and marks it populated.
    pub fn accumulate_grad(&mut self, id: ParamId, g: &DenseMatrix<T>) -> Result<()> {
        self.grads[id.0].add_assign(g)?;
        self.populated[id.0] = true;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for (g, p) in self.grads.iter_mut().zip(self.populated.iter_mut()) {
            g.fill(T::zero());
            *p = false;
        }
    }

    /// Total number of scalars across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn grad_and_value_mut(&mut self, id: ParamId) -> (&DenseMatrix<T>, &mut DenseMatrix<T>) {
        (&self.grads[id.0], Arc::make_mut(&mut self.values[id.0]))
    }
}
