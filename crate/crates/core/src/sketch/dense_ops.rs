//! Dense reference operators: the identity and a scaled Gaussian matrix.

use super::{check_input, LinearSketch};
use crate::error::Result;
use crate::linalg::DenseMatrix;
use crate::randbits::BitSource;

/// The n×n identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Identity(pub usize);

impl LinearSketch for Identity {
    fn input_dim(&self) -> usize {
        self.0
    }

    fn output_dim(&self) -> usize {
        self.0
    }

    fn apply(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        check_input(self, a)?;
        Ok(a.clone())
    }

    fn bits_used(&self) -> u64 {
        0
    }
}

/// `G/√m` with G an m×n matrix of independent standard normals.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSketch {
    matrix: DenseMatrix,
    bits: u64,
}

impl GaussianSketch {
    pub fn new(m: usize, n: usize, src: &mut BitSource) -> Self {
        let before = src.bits_consumed();
        let scale = 1.0 / (m.max(1) as f64).sqrt();
        let matrix = DenseMatrix::from_fn(m, n, |_, _| src.gaussian() * scale);
        Self {
            matrix,
            bits: src.bits_consumed() - before,
        }
    }

    /// The scaled matrix `G/√m`.
    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }
}

impl LinearSketch for GaussianSketch {
    fn input_dim(&self) -> usize {
        self.matrix.cols()
    }

    fn output_dim(&self) -> usize {
        self.matrix.rows()
    }

    fn apply(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        self.matrix.matmul(a)
    }

    fn bits_used(&self) -> u64 {
        self.bits
    }
}
