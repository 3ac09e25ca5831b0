use crate::error::{Error, Result};
use crate::numkit::{DenseMatrix, ParamId, ParamStore};
use crate::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// L2 penalty folded into the gradient before the moment updates.
    pub weight_decay: T,
}

impl<T: Scalar> Default for AdamConfig<T> {
    fn default() -> Self {
        Self {
            lr: T::of(1e-3),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            weight_decay: T::zero(),
        }
    }
}

/// Moment buffers and step count for bias-corrected Adam.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig<T>,
    t: u64,
    m: Vec<DenseMatrix<T>>,
    v: Vec<DenseMatrix<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig<T>, store: &ParamStore<T>) -> Self {
        let zeros = || {
            store
                .ids()
                .map(|id| {
                    let (r, c) = store.value(id).shape();
                    DenseMatrix::zeros(r, c)
                })
                .collect::<Vec<_>>()
        };
        Self {
            config,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of every parameter; gradients are zeroed afterwards.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        self.step_where(store, |_| true)
    }

    /// Like [`AdamState::step`] but leaves parameters rejected by `active`
    /// (and their moments) untouched.
    pub fn step_where(&mut self, store: &mut ParamStore<T>, active: impl Fn(ParamId) -> bool) -> Result<()> {
        if store.len() != self.m.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} parameters, store has {}",
                self.m.len(),
                store.len()
            )));
        }
        if let Some(id) = store.ids().find(|&id| active(id) && !store.has_grad(id)) {
            return Err(Error::Contract(format!(
                "parameter {} has no gradient",
                store.name(id)
            )));
        }
        self.t += 1;
        let c = self.config;
        let t = self.t as i32;
        let bc1 = T::one() - c.beta1.powi(t);
        let bc2 = T::one() - c.beta2.powi(t);
        let ids: Vec<_> = store.ids().filter(|&id| active(id)).collect();
        for id in ids {
            let k = id.index();
            let (grad, value) = store.grad_and_value_mut(id);
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (((p, &g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let g = g + c.weight_decay * *p;
                *mi = c.beta1 * *mi + (T::one() - c.beta1) * g;
                *vi = c.beta2 * *vi + (T::one() - c.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        store.zero_grads();
        Ok(())
    }
}
