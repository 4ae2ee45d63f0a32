use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// `U(-sqrt(6 / (rows + cols)), +sqrt(6 / (rows + cols)))`.
    UniformScaled,
    Zeros,
}

pub fn init_params<T: Scalar>(rows: usize, cols: usize, scheme: InitScheme, seed: u64) -> Matrix<T> {
    init_params_with(rows, cols, scheme, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn init_params_with<T: Scalar, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    scheme: InitScheme,
    rng: &mut R,
) -> Matrix<T> {
    let mut m = Matrix::zeros(rows, cols);
    if let InitScheme::UniformScaled = scheme {
        let fan = (rows + cols).max(1) as f64;
        let bound = (6.0 / fan).sqrt();
        for x in m.as_mut_slice() {
            *x = T::lit(rng.gen_range(-bound..bound));
        }
    }
    m
}
