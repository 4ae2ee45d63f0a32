use rand::Rng;

use super::init::{init_params_with, InitScheme};
use super::{Matrix, Parameterized, Scalar};

/// Lookup table with one trailing out-of-vocabulary row.
///
/// Rows `0..vocab_size` belong to known ids; any index at or past
/// `vocab_size` resolves to the OOV row. The OOV row starts at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    vectors: Matrix<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn init<R: Rng + ?Sized>(vocab_size: usize, dim: usize, scheme: InitScheme, rng: &mut R) -> Self {
        let mut vectors = init_params_with(vocab_size + 1, dim, scheme, rng);
        vectors.row_mut(vocab_size).fill(T::zero());
        Self { vectors }
    }

    pub fn from_matrix(vectors: Matrix<T>) -> Self {
        assert!(vectors.rows() >= 1, "embedding table needs an OOV row");
        Self { vectors }
    }

    pub fn vocab_size(&self) -> usize {
        self.vectors.rows() - 1
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn oov_row(&self) -> usize {
        self.vocab_size()
    }

    pub fn resolve(&self, row: usize) -> usize {
        row.min(self.oov_row())
    }

    pub fn lookup(&self, row: usize) -> &[T] {
        self.vectors.row(self.resolve(row))
    }

    pub fn lookup_mut(&mut self, row: usize) -> &mut [T] {
        let r = self.resolve(row);
        self.vectors.row_mut(r)
    }

    pub fn vectors(&self) -> &Matrix<T> {
        &self.vectors
    }
}

impl<T: Scalar> Parameterized<T> for EmbeddingTable<T> {
    fn params(&self) -> Vec<(String, &Matrix<T>)> {
        vec![("vectors".into(), &self.vectors)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        vec![("vectors".into(), &mut self.vectors)]
    }
}
