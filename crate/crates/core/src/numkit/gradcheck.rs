use crate::error::{Error, Result};
use crate::numkit::{ParamStore, Tape, Var};
use crate::Scalar;

/// Worst coordinate found by [`finite_diff_gradcheck`].
#[derive(Clone, Debug)]
pub struct GradCheckReport<T> {
    pub max_rel_error: T,
    pub worst_param: String,
    pub worst_index: usize,
    pub coordinates: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error<T: Scalar>(analytic: T, numeric: T) -> T {
    let denom = analytic.abs().max(numeric.abs()).max(T::of(1e-8));
    (analytic - numeric).abs() / denom
}

/// Compares backprop against central differences for every scalar of every
/// parameter in `store`.
///
/// `build` records the loss on a fresh tape and returns its node; it is
/// called once for the analytic pass and twice per coordinate.
pub fn finite_diff_gradcheck<T, F>(store: &mut ParamStore<T>, h: T, mut build: F) -> Result<GradCheckReport<T>>
where
    T: Scalar,
    F: FnMut(&mut Tape<T>, &ParamStore<T>) -> Result<Var>,
{
    if h <= T::zero() {
        return Err(Error::Contract("step h must be positive".into()));
    }
    let mut analytic = store.clone();
    analytic.zero_grads();
    {
        let mut tape = Tape::new();
        let loss = build(&mut tape, &analytic)?;
        tape.backward_into(loss, &mut analytic)?;
    }

    let mut eval = |store: &ParamStore<T>| -> Result<T> {
        let mut tape = Tape::new();
        let loss = build(&mut tape, store)?;
        let v = tape.scalar(loss)?;
        if !v.is_finite() {
            return Err(Error::Evaluation("objective is not finite".into()));
        }
        Ok(v)
    };

    let mut report = GradCheckReport {
        max_rel_error: T::zero(),
        worst_param: String::new(),
        worst_index: 0,
        coordinates: 0,
    };
    let two_h = h + h;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for idx in 0..store.value(id).len() {
            let orig = store.value(id).data()[idx];
            store.value_mut(id).data_mut()[idx] = orig + h;
            let plus = eval(store);
            store.value_mut(id).data_mut()[idx] = orig - h;
            let minus = eval(store);
            store.value_mut(id).data_mut()[idx] = orig;
            let numeric = (plus? - minus?) / two_h;
            let a = analytic.grad(id).data()[idx];
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = err;
                report.worst_param = store.name(id).to_string();
                report.worst_index = idx;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::DenseMatrix;

    #[test]
    fn quadratic() {
        let mut s = ParamStore::new();
        let id = s.insert("theta", DenseMatrix::scalar(3.0f64)).unwrap();
        let r = finite_diff_gradcheck(&mut s, 1e-4, |t, s| {
            let x = t.param(s, id);
            let y = t.mul(x, x)?;
            Ok(t.sum(y))
        })
        .unwrap();
        assert!(r.max_rel_error <= 1e-6, "{r:?}");
    }

    #[test]
    fn constant_objective_has_zero_error() {
        let mut s = ParamStore::new();
        let id = s.insert("theta", DenseMatrix::scalar(1.5f64)).unwrap();
        let r = finite_diff_gradcheck(&mut s, 1e-4, |t, s| {
            let _ = t.param(s, id);
            let c = t.constant(DenseMatrix::scalar(4.0));
            Ok(t.sum(c))
        })
        .unwrap();
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let mut s = ParamStore::new();
        let id = s.insert("theta", DenseMatrix::scalar(f64::MAX)).unwrap();
        let r = finite_diff_gradcheck(&mut s, 1e300, |t, s| {
            let x = t.param(s, id);
            Ok(t.sum_squares(x))
        });
        assert!(r.is_err());
    }
}
