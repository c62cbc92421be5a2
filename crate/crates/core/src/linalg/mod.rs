//! Dense and sparse matrices, factorizations, spectra and test subspaces.

mod csr;
mod decomp;
mod dense;
pub mod mtx;
mod spectrum;
mod subspace;

pub use csr::{CsrMatrix, NnzStats};
pub use decomp::{
    back_substitute, cholesky_solve, lstsq, qr_factor, singular_values, symmetric_eigenvalues, upper_triangular_inverse, RANK_TOL,
};
pub use dense::{dot, norm2, DenseMatrix};
pub use spectrum::{hausdorff_distance, SpectrumSet};
pub use subspace::{random_orthonormal, spiked_orthonormal};
