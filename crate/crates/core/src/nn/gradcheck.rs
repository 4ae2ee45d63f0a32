use super::{Gradients, Parameterized, Scalar};
use crate::error::{dim_err, Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Relative error `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Perturbs every parameter of `model` by `+-epsilon` and `+-2 epsilon` and
/// compares the fourth-order central difference of `loss` with the matching
/// entry of `analytic`.
pub fn finite_difference_check<T, M, F>(
    model: &M,
    analytic: &Gradients<M>,
    loss: F,
    epsilon: T,
) -> Result<GradCheckReport>
where
    T: Scalar,
    M: Parameterized<T> + Clone,
    F: Fn(&M) -> Result<T>,
{
    let base = loss(model)?;
    if !base.is_finite() {
        return Err(Error::Numerical(format!("loss is not finite: {base}")));
    }
    let grads = analytic.get().params();
    let shapes: Vec<(String, usize)> = model
        .params()
        .iter()
        .map(|(n, m)| (n.clone(), m.as_slice().len()))
        .collect();
    if grads.len() != shapes.len() {
        return dim_err("analytic gradient layout differs from model");
    }

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let two_eps = epsilon + epsilon;
    for (p, (name, len)) in shapes.iter().enumerate() {
        if grads[p].1.as_slice().len() != *len {
            return dim_err(format!("gradient for {name} has wrong size"));
        }
        for i in 0..*len {
            let orig = probe.params()[p].1.as_slice()[i];
            let mut at = |step: T| -> Result<T> {
                set(&mut probe, p, i, orig + step);
                let l = loss(&probe)?;
                if !l.is_finite() {
                    return Err(Error::Numerical(format!("non-finite loss perturbing {name}[{i}]")));
                }
                Ok(l)
            };
            let d1 = at(epsilon)? - at(-epsilon)?;
            let d2 = at(two_eps)? - at(-two_eps)?;
            set(&mut probe, p, i, orig);
            let numeric = ((T::lit(8.0) * d1 - d2) / (T::lit(6.0) * two_eps)).as_f64();
            let a = grads[p].1.as_slice()[i].as_f64();
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.worst_param.is_empty() {
                report.max_relative_error = err;
                report.worst_param = name.clone();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

fn set<T: Scalar, M: Parameterized<T>>(model: &mut M, p: usize, i: usize, v: T) {
    let mut params = model.params_mut();
    params[p].1.as_mut_slice()[i] = v;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer, Matrix};

    #[test]
    fn linear_model_squared_loss_is_exact() {
        let w = Matrix::from_rows(&[&[0.3, -1.2, 0.7], &[2.0, 0.1, -0.4]]).unwrap();
        let layer = DenseLayer::<f64>::new(w, vec![0.05, -0.3], Activation::Identity).unwrap();
        let x = [0.5, -1.5, 2.0];
        let y = [1.0, -2.0];
        let loss = |l: &DenseLayer<f64>| -> Result<f64> {
            let out = l.apply(&x)?;
            Ok(out.iter().zip(&y).map(|(o, t)| 0.5 * (o - t) * (o - t)).sum())
        };
        let trace = layer.forward(&x).unwrap();
        let g_out: Vec<f64> = trace.output.iter().zip(&y).map(|(o, t)| o - t).collect();
        let mut grads = Gradients::zeros_like(&layer);
        layer.backward(&trace, &g_out, grads.get_mut()).unwrap();
        let report = finite_difference_check(&layer, &grads, loss, 1e-5).unwrap();
        assert_eq!(report.checked, 8);
        assert!(report.max_relative_error < 1e-7, "{report:?}");
    }

    #[test]
    fn detects_wrong_gradient() {
        let layer = DenseLayer::<f64>::new(Matrix::identity(1), vec![0.0], Activation::Identity).unwrap();
        let loss = |l: &DenseLayer<f64>| Ok(l.apply(&[2.0])?[0].powi(2));
        let mut grads = Gradients::zeros_like(&layer);
        grads.get_mut().bias_mut()[0] = 123.0;
        let report = finite_difference_check(&layer, &grads, loss, 1e-5).unwrap();
        assert!(report.max_relative_error > 0.5);
    }

    #[test]
    fn non_finite_loss_is_error() {
        let layer = DenseLayer::<f64>::new(Matrix::identity(1), vec![0.0], Activation::Identity).unwrap();
        let grads = Gradients::zeros_like(&layer);
        let r = finite_difference_check(&layer, &grads, |_| Ok(f64::NAN), 1e-5);
        assert!(matches!(r, Err(Error::Numerical(_))));
    }
}
