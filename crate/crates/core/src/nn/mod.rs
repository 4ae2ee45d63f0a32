//! Minimal neural-network substrate shared by both models: dense layers,
//! embedding tables, softmax/cross-entropy, pooling, plain SGD and
//! finite-difference gradient verification.

mod embedding;
mod gradcheck;
mod init;
mod layer;
mod matrix;
mod ops;
mod params;
mod scalar;
mod serialize;

pub use embedding::EmbeddingTable;
pub use gradcheck::{finite_difference_check, relative_error, GradCheckReport, DEFAULT_EPSILON};
pub use init::{init_params, init_params_with, InitScheme};
pub use layer::{sigmoid, Activation, DenseLayer, DenseTrace};
pub use matrix::{axpy, dot, Matrix, MatrixRecord};
pub use ops::{cross_entropy, log_sum_exp, pool, pool_backward, softmax, PoolMode, PROB_FLOOR};
pub use params::{sgd_step, Gradients, Parameterized};
pub(crate) use params::{prefixed, prefixed_mut};
pub use scalar::Scalar;
pub use serialize::{ModelDocument, FORMAT_VERSION};
