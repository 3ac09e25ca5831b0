use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numkit::{relu, DenseMatrix, ParamId, ParamStore, Tape, Var};
use crate::rng::{xavier_uniform, Rng};
use crate::Scalar;

/// Nonlinearity applied between hidden layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            _ => Err(Error::Config(format!("unknown activation {s:?}"))),
        }
    }
}

/// Feed-forward adapter `x W₀ + b₀ → act → … → x W_L + b_L`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpAdapterParams {
    layers: Vec<(ParamId, ParamId)>,
    activation: Activation,
}

fn names(layer: usize) -> (String, String) {
    (format!("mlp.w{layer}"), format!("mlp.b{layer}"))
}

impl MlpAdapterParams {
    /// Glorot-uniform weights and zero biases for widths `dims[0] → … → dims[last]`.
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, dims: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("mlp widths {dims:?} need at least two positive entries")));
        }
        let layers = dims
            .windows(2)
            .map(|w| (xavier_uniform(w[0], w[1], rng), DenseMatrix::zeros(1, w[1])))
            .collect();
        Self::with_values(store, layers, activation)
    }

    pub fn with_values<T: Scalar>(
        store: &mut ParamStore<T>,
        layers: Vec<(DenseMatrix<T>, DenseMatrix<T>)>,
        activation: Activation,
    ) -> Result<Self> {
        check_chain(layers.iter().map(|(w, b)| (w.shape(), b.shape())))?;
        let mut ids = Vec::with_capacity(layers.len());
        for (i, (w, b)) in layers.into_iter().enumerate() {
            let (wn, bn) = names(i);
            ids.push((store.insert(wn, w)?, store.insert(bn, b)?));
        }
        Ok(Self {
            layers: ids,
            activation,
        })
    }

    /// Re-attaches to `mlp.w*` / `mlp.b*` parameters already in `store`.
    pub fn from_store<T: Scalar>(store: &ParamStore<T>, activation: Activation) -> Result<Self> {
        let mut layers = Vec::new();
        loop {
            let (wn, bn) = names(layers.len());
            match (store.id(&wn), store.id(&bn)) {
                (Some(w), Some(b)) => layers.push((w, b)),
                _ => break,
            }
        }
        if layers.is_empty() {
            return Err(Error::Config("no mlp parameters in store".into()));
        }
        check_chain(
            layers
                .iter()
                .map(|&(w, b)| (store.value(w).shape(), store.value(b).shape())),
        )?;
        Ok(Self { layers, activation })
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[(ParamId, ParamId)] {
        &self.layers
    }

    pub fn input_dim<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        store.value(self.layers[0].0).rows()
    }

    pub fn output_dim<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        store.value(self.layers[self.layers.len() - 1].0).cols()
    }

    pub fn num_scalars<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        self.layers
            .iter()
            .map(|&(w, b)| store.value(w).len() + store.value(b).len())
            .sum()
    }

    /// Records the forward pass of `x` on the tape.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let wv = tape.param(store, w);
            let bv = tape.param(store, b);
            let lin = tape.matmul(h, wv)?;
            h = tape.add_row(lin, bv)?;
            if i + 1 < self.layers.len() && self.activation == Activation::Relu {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

fn check_chain(shapes: impl Iterator<Item = ((usize, usize), (usize, usize))>) -> Result<()> {
    let mut prev: Option<usize> = None;
    let mut any = false;
    for ((wi, wo), b) in shapes {
        any = true;
        if b != (1, wo) || prev.is_some_and(|p| p != wi) {
            return Err(Error::dim(format!("mlp layer W {wi}x{wo} with bias {b:?} after width {prev:?}")));
        }
        prev = Some(wo);
    }
    if !any {
        return Err(Error::dim("mlp needs at least one layer"));
    }
    Ok(())
}

/// `f_θ(E_LLM)`, shape `N × d`.
pub fn mlp_project<T: Scalar>(e: &DenseMatrix<T>, store: &ParamStore<T>, params: &MlpAdapterParams) -> Result<DenseMatrix<T>> {
    if e.cols() != params.input_dim(store) {
        return Err(Error::dim(format!(
            "input has {} columns, adapter expects {}",
            e.cols(),
            params.input_dim(store)
        )));
    }
    let mut h = e.clone();
    for (i, &(w, b)) in params.layers.iter().enumerate() {
        h = h.matmul(store.value(w))?;
        let bias = store.value(b);
        for r in 0..h.rows() {
            for (o, &v) in h.row_mut(r).iter_mut().zip(bias.data()) {
                *o += v;
            }
        }
        if i + 1 < params.layers.len() && params.activation == Activation::Relu {
            h = relu(&h);
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian, substream};

    #[test]
    fn identity_layer_passes_input_through() {
        let mut store = ParamStore::new();
        let p = MlpAdapterParams::with_values(
            &mut store,
            vec![(DenseMatrix::identity(4), DenseMatrix::zeros(1, 4))],
            Activation::Relu,
        )
        .unwrap();
        let x = gaussian::<f64>(6, 4, 1.0, &mut substream(1, "x"));
        assert_eq!(mlp_project(&x, &store, &p).unwrap(), x);
    }

    #[test]
    fn zero_weights_give_bias_rows() {
        let mut store = ParamStore::new();
        let b = DenseMatrix::from_rows(&[vec![0.5, -1.0]]).unwrap();
        let p = MlpAdapterParams::with_values(&mut store, vec![(DenseMatrix::zeros(3, 2), b.clone())], Activation::Relu)
            .unwrap();
        let out = mlp_project(&DenseMatrix::filled(4, 3, 2.0), &store, &p).unwrap();
        for i in 0..4 {
            assert_eq!(out.row(i), b.row(0));
        }
    }

    #[test]
    fn two_layers_match_naive_oracle() {
        let mut rng = substream(2, "mlp");
        let x = gaussian::<f64>(4, 8, 1.0, &mut rng);
        let (w0, b0) = (gaussian(8, 5, 1.0, &mut rng), gaussian(1, 5, 1.0, &mut rng));
        let (w1, b1) = (gaussian(5, 3, 1.0, &mut rng), gaussian(1, 3, 1.0, &mut rng));
        let mut store = ParamStore::new();
        let p = MlpAdapterParams::with_values(
            &mut store,
            vec![(w0.clone(), b0.clone()), (w1.clone(), b1.clone())],
            Activation::Relu,
        )
        .unwrap();
        let out = mlp_project(&x, &store, &p).unwrap();
        for n in 0..4 {
            let hidden: Vec<f64> = (0..5)
                .map(|h| (b0[(0, h)] + (0..8).map(|i| x[(n, i)] * w0[(i, h)]).sum::<f64>()).max(0.0))
                .collect();
            for o in 0..3 {
                let want = b1[(0, o)] + (0..5).map(|h| hidden[h] * w1[(h, o)]).sum::<f64>();
                assert!((out[(n, o)] - want).abs() <= 1e-10);
            }
        }
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = p.forward(&mut tape, &store, xv).unwrap();
        assert_eq!(tape.value(y), &out);
    }

    #[test]
    fn shape_errors() {
        let mut store = ParamStore::<f64>::new();
        assert!(MlpAdapterParams::with_values(
            &mut store,
            vec![
                (DenseMatrix::zeros(3, 2), DenseMatrix::zeros(1, 2)),
                (DenseMatrix::zeros(3, 2), DenseMatrix::zeros(1, 2))
            ],
            Activation::Relu
        )
        .is_err());
        let p = MlpAdapterParams::init(&mut store, &[6, 4, 2], Activation::Relu, &mut substream(0, "i")).unwrap();
        assert_eq!(p.num_scalars(&store), 6 * 4 + 4 + 4 * 2 + 2);
        assert!(matches!(
            mlp_project(&DenseMatrix::zeros(2, 5), &store, &p),
            Err(Error::Dimension(_))
        ));
    }
}
