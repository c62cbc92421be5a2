//! Orthonormal test subspaces.

use super::decomp::householder_qr;
use super::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::randbits::BitSource;

/// Spike amplitude relative to √n; row j < heavy_rows then carries a
/// leverage score of about c²/(c² + 1).
const SPIKE: f64 = 6.0;

fn gaussian_matrix(n: usize, d: usize, src: &mut BitSource) -> DenseMatrix {
    DenseMatrix::from_fn(n, d, |_, _| src.gaussian())
}

/// Q factor of an n×d standard Gaussian matrix: a uniformly random
/// d-dimensional subspace with orthonormal basis.
pub fn random_orthonormal(n: usize, d: usize, seed: u64) -> Result<DenseMatrix> {
    if d == 0 || n < d {
        return Err(Error::BadDims(format!("random_orthonormal needs n >= d >= 1, got n={n}, d={d}")));
    }
    let mut src = BitSource::new(seed);
    let g = gaussian_matrix(n, d, &mut src);
    Ok(householder_qr(&g).0)
}

/// Orthonormal basis whose first `heavy_rows` rows have leverage close to 1.
///
/// Column j < heavy_rows is `SPIKE·√n·e_j` plus Gaussian noise, the rest is
/// pure noise; the result is the Q factor of that matrix.
pub fn spiked_orthonormal(n: usize, d: usize, heavy_rows: usize, seed: u64) -> Result<DenseMatrix> {
    if heavy_rows == 0 || heavy_rows > d || d > n {
        return Err(Error::BadDims(format!(
            "spiked_orthonormal needs 1 <= heavy_rows <= d <= n, got heavy_rows={heavy_rows}, d={d}, n={n}"
        )));
    }
    let mut src = BitSource::new(seed).derive(0x5);
    let mut g = gaussian_matrix(n, d, &mut src);
    let amp = SPIKE * (n as f64).sqrt();
    for j in 0..heavy_rows {
        g[(j, j)] += amp;
    }
    Ok(householder_qr(&g).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_case_is_orthogonal() {
        let u = random_orthonormal(4, 4, 1).unwrap();
        assert!(u.orthonormality_defect() <= 1e-10);
    }

    #[test]
    fn scores_sum_to_d() {
        let u = random_orthonormal(8, 2, 3).unwrap();
        let total: f64 = u.row_norms_squared().iter().sum();
        assert!((total - 2.0).abs() < 1e-10);
    }

    #[test]
    fn seeds_differ() {
        let a = random_orthonormal(64, 8, 1).unwrap();
        let b = random_orthonormal(64, 8, 2).unwrap();
        assert!(a.orthonormality_defect() <= 1e-10 && b.orthonormality_defect() <= 1e-10);
        assert!(a.max_abs_diff(&b) > 1e-3);
    }

    #[test]
    fn spiked_rows_are_heavy() {
        let u = spiked_orthonormal(100, 4, 2, 9).unwrap();
        let l = u.row_norms_squared();
        assert!(l[0] >= 0.9 && l[1] >= 0.9, "{:?}", &l[..2]);
        assert!(l[2..].iter().all(|&x| x < 0.5));
        assert!((l.iter().sum::<f64>() - 4.0).abs() < 1e-10);
        let full = spiked_orthonormal(5, 5, 5, 1).unwrap();
        assert!(full.row_norms_squared().iter().all(|&x| (x - 1.0).abs() < 1e-10));
    }

    #[test]
    fn bad_dims() {
        assert!(random_orthonormal(2, 3, 0).is_err());
        assert!(random_orthonormal(2, 0, 0).is_err());
        assert!(spiked_orthonormal(10, 4, 5, 0).is_err());
        assert!(spiked_orthonormal(10, 4, 0, 0).is_err());
    }
}
