use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{dim_err, Error, Result};

/// Lower clamp applied to probabilities before taking a log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Max-shifted softmax.
pub fn softmax<T: Scalar>(scores: &[T]) -> Result<Vec<T>> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("softmax of empty vector".into()));
    }
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `log(sum(exp(scores)))`, stable for large magnitudes.
pub fn log_sum_exp<T: Scalar>(scores: impl IntoIterator<Item = T> + Clone) -> T {
    let max = scores.clone().into_iter().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    let s: T = scores.into_iter().map(|x| (x - max).exp()).sum();
    max + s.ln()
}

/// `-sum(t_i * ln(max(p_i, 1e-12)))`.
pub fn cross_entropy<T: Scalar>(target: &[T], predicted: &[T]) -> Result<T> {
    if target.len() != predicted.len() {
        return dim_err(format!(
            "cross entropy: target has {} entries, prediction {}",
            target.len(),
            predicted.len()
        ));
    }
    let floor = T::lit(PROB_FLOOR);
    Ok(-target
        .iter()
        .zip(predicted)
        .map(|(&t, &p)| if t == T::zero() { T::zero() } else { t * p.max(floor).ln() })
        .sum::<T>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Max,
    #[default]
    Average,
}

impl std::str::FromStr for PoolMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(PoolMode::Max),
            "average" | "avg" | "mean" => Ok(PoolMode::Average),
            other => Err(Error::Config(format!("unknown pooling mode {other:?}"))),
        }
    }
}

/// Elementwise max or mean of `vectors`; the empty list pools to zeros of `dim`.
pub fn pool<T: Scalar>(vectors: &[&[T]], dim: usize, mode: PoolMode) -> Result<Vec<T>> {
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return dim_err(format!("pool: expected dim {dim}, got {}", bad.len()));
    }
    if vectors.is_empty() {
        return Ok(vec![T::zero(); dim]);
    }
    let mut out = vectors[0].to_vec();
    match mode {
        PoolMode::Max => {
            for v in &vectors[1..] {
                for (o, &x) in out.iter_mut().zip(v.iter()) {
                    if x > *o {
                        *o = x;
                    }
                }
            }
        }
        PoolMode::Average => {
            for v in &vectors[1..] {
                for (o, &x) in out.iter_mut().zip(v.iter()) {
                    *o += x;
                }
            }
            let n = T::from_usize(vectors.len()).unwrap();
            out.iter_mut().for_each(|o| *o /= n);
        }
    }
    Ok(out)
}

/// Distributes `grad_output` of [`pool`] back over its inputs.
///
/// Max pooling routes each coordinate to the first input attaining the max.
pub fn pool_backward<T: Scalar>(vectors: &[&[T]], mode: PoolMode, grad_output: &[T]) -> Vec<Vec<T>> {
    let dim = grad_output.len();
    let n = vectors.len();
    let mut grads = vec![vec![T::zero(); dim]; n];
    if n == 0 {
        return grads;
    }
    match mode {
        PoolMode::Average => {
            let scale = T::one() / T::from_usize(n).unwrap();
            for g in grads.iter_mut() {
                for (gi, &go) in g.iter_mut().zip(grad_output) {
                    *gi = go * scale;
                }
            }
        }
        PoolMode::Max => {
            for d in 0..dim {
                let mut arg = 0;
                for (i, v) in vectors.iter().enumerate().skip(1) {
                    if v[d] > vectors[arg][d] {
                        arg = i;
                    }
                }
                grads[arg][d] = grad_output[d];
            }
        }
    }
    grads
}
