use super::{Matrix, Scalar};
use crate::error::{dim_err, Error, Result};

/// A value owning a fixed, ordered set of named parameter tensors.
pub trait Parameterized<T: Scalar> {
    fn params(&self) -> Vec<(String, &Matrix<T>)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Matrix<T>)>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|(_, m)| m.as_slice().len()).sum()
    }
}

pub(crate) fn prefixed<'a, T>(
    prefix: &str,
    inner: Vec<(String, &'a Matrix<T>)>,
) -> impl Iterator<Item = (String, &'a Matrix<T>)> + 'a {
    let prefix = prefix.to_owned();
    inner
        .into_iter()
        .map(move |(n, m)| (format!("{prefix}.{n}"), m))
}

pub(crate) fn prefixed_mut<'a, T>(
    prefix: &str,
    inner: Vec<(String, &'a mut Matrix<T>)>,
) -> impl Iterator<Item = (String, &'a mut Matrix<T>)> + 'a {
    let prefix = prefix.to_owned();
    inner
        .into_iter()
        .map(move |(n, m)| (format!("{prefix}.{n}"), m))
}

/// Gradient accumulator with the exact parameter layout of its model `M`.
///
/// Backward passes write into the wrapped value as if it were the model.
#[derive(Debug, Clone)]
pub struct Gradients<M> {
    inner: M,
}

impl<M> Gradients<M> {
    pub fn zeros_like<T: Scalar>(model: &M) -> Self
    where
        M: Parameterized<T> + Clone,
    {
        let mut g = Self {
            inner: model.clone(),
        };
        g.zero();
        g
    }

    pub fn zero<T: Scalar>(&mut self)
    where
        M: Parameterized<T>,
    {
        for (_, m) in self.inner.params_mut() {
            m.fill(T::zero());
        }
    }

    pub fn get(&self) -> &M {
        &self.inner
    }

    pub fn get_mut(&mut self) -> &mut M {
        &mut self.inner
    }

    pub fn max_abs<T: Scalar>(&self) -> T
    where
        M: Parameterized<T>,
    {
        self.inner
            .params()
            .iter()
            .flat_map(|(_, m)| m.as_slice().iter())
            .fold(T::zero(), |acc, x| acc.max(x.abs()))
    }
}

/// `params -= eta * grads`, checked tensor by tensor.
pub fn sgd_step<T: Scalar, M: Parameterized<T>>(
    params: &mut M,
    grads: &Gradients<M>,
    eta: T,
) -> Result<()> {
    if !(eta > T::zero() && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive and finite, got {eta}"
        )));
    }
    let g = grads.inner.params();
    let p = params.params_mut();
    if g.len() != p.len() {
        return dim_err("gradient tensor count differs from model");
    }
    for ((pn, pm), (gn, gm)) in p.into_iter().zip(g) {
        if pn != gn || pm.shape() != gm.shape() {
            return dim_err(format!(
                "gradient {gn} {:?} does not match parameter {pn} {:?}",
                gm.shape(),
                pm.shape()
            ));
        }
        for (w, &d) in pm.as_mut_slice().iter_mut().zip(gm.as_slice()) {
            *w -= eta * d;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Toy(Matrix<f64>);

    impl Parameterized<f64> for Toy {
        fn params(&self) -> Vec<(String, &Matrix<f64>)> {
            vec![("w".into(), &self.0)]
        }
        fn params_mut(&mut self) -> Vec<(String, &mut Matrix<f64>)> {
            vec![("w".into(), &mut self.0)]
        }
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut t = Toy(Matrix::from_vec(1, 2, vec![1.0, -3.0]).unwrap());
        let g = Gradients::zeros_like(&t);
        sgd_step(&mut t, &g, 0.1).unwrap();
        assert_eq!(t.0.as_slice(), &[1.0, -3.0]);
    }

    #[test]
    fn single_step_hand_value() {
        let mut t = Toy(Matrix::from_vec(1, 1, vec![1.0]).unwrap());
        let mut g = Gradients::zeros_like(&t);
        g.get_mut().0[(0, 0)] = 2.0;
        sgd_step(&mut t, &g, 0.001).unwrap();
        assert!((t.0[(0, 0)] - 0.998).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_eta() {
        let mut t = Toy(Matrix::zeros(1, 1));
        let g = Gradients::zeros_like(&t);
        assert!(sgd_step(&mut t, &g, 0.0).is_err());
        assert!(sgd_step(&mut t, &g, -1.0).is_err());
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut t = Toy(Matrix::zeros(1, 2));
        let g = Gradients::zeros_like(&Toy(Matrix::zeros(2, 1)));
        assert!(sgd_step(&mut t, &g, 0.1).is_err());
    }

    #[test]
    fn descends_convex_quadratic() {
        // loss = (w - 3)^2
        let mut t = Toy(Matrix::from_vec(1, 1, vec![-2.0]).unwrap());
        let mut g = Gradients::zeros_like(&t);
        let mut prev = f64::INFINITY;
        for _ in 0..50 {
            let w = t.0[(0, 0)];
            let loss = (w - 3.0).powi(2);
            assert!(loss < prev);
            prev = loss;
            g.get_mut().0[(0, 0)] = 2.0 * (w - 3.0);
            sgd_step(&mut t, &g, 0.05).unwrap();
        }
    }
}
