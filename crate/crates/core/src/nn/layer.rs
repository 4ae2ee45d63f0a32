use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::{init_params_with, InitScheme};
use super::{Matrix, Parameterized, Scalar};
use crate::error::{dim_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    pub fn derivative<T: Scalar>(self, z: T, a: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => a * (T::one() - a),
            Activation::Identity => T::one(),
        }
    }
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Fully connected layer `activation(W x + b)` with `W` stored out x in.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    weights: Matrix<T>,
    bias: Matrix<T>,
    activation: Activation,
}

/// Values cached by a forward pass and consumed by [`DenseLayer::backward`].
#[derive(Debug, Clone)]
pub struct DenseTrace<T> {
    pub input: Vec<T>,
    pub pre_activation: Vec<T>,
    pub output: Vec<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(weights: Matrix<T>, bias: Vec<T>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return dim_err(format!(
                "bias length {} != layer output {}",
                bias.len(),
                weights.rows()
            ));
        }
        let n = bias.len();
        Ok(Self {
            weights,
            bias: Matrix::from_vec(1, n, bias)?,
            activation,
        })
    }

    /// Weights drawn with `scheme`, zero bias.
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        scheme: InitScheme,
        rng: &mut R,
    ) -> Self {
        Self {
            weights: init_params_with(out_dim, in_dim, scheme, rng),
            bias: Matrix::zeros(1, out_dim),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Matrix<T> {
        &mut self.weights
    }

    pub fn bias(&self) -> &[T] {
        self.bias.as_slice()
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        self.bias.as_mut_slice()
    }

    pub fn forward(&self, x: &[T]) -> Result<DenseTrace<T>> {
        if x.len() != self.in_dim() {
            return dim_err(format!(
                "dense layer expects input of {}, got {}",
                self.in_dim(),
                x.len()
            ));
        }
        let mut pre = self.weights.matvec(x)?;
        for (z, &b) in pre.iter_mut().zip(self.bias.as_slice()) {
            *z += b;
        }
        let output = pre.iter().map(|&z| self.activation.apply(z)).collect();
        Ok(DenseTrace {
            input: x.to_vec(),
            pre_activation: pre,
            output,
        })
    }

    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(x)?.output)
    }

    /// Accumulates parameter gradients into `grads` and returns d loss / d input.
    pub fn backward(
        &self,
        trace: &DenseTrace<T>,
        grad_output: &[T],
        grads: &mut DenseLayer<T>,
    ) -> Result<Vec<T>> {
        if grad_output.len() != self.out_dim() {
            return dim_err("dense backward: gradient length != output dim");
        }
        let delta: Vec<T> = grad_output
            .iter()
            .zip(trace.pre_activation.iter().zip(&trace.output))
            .map(|(&g, (&z, &a))| g * self.activation.derivative(z, a))
            .collect();
        grads.weights.add_outer(T::one(), &delta, &trace.input)?;
        for (b, &d) in grads.bias.as_mut_slice().iter_mut().zip(&delta) {
            *b += d;
        }
        self.weights.matvec_transposed(&delta)
    }
}

impl<T: Scalar> Parameterized<T> for DenseLayer<T> {
    fn params(&self) -> Vec<(String, &Matrix<T>)> {
        vec![("weight".into(), &self.weights), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        vec![
            ("weight".into(), &mut self.weights),
            ("bias".into(), &mut self.bias),
        ]
    }
}
