//! Householder QR, singular values and symmetric eigenvalues.

use super::dense::{dot, DenseMatrix};
use super::spectrum::SpectrumSet;
use crate::error::{Error, Result};

/// Relative threshold below which a matrix is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Thin Householder QR without the rank test. Returns `(Q, T)` with `Q`
/// n×d having orthonormal columns and `T` d×d upper triangular with a
/// nonnegative diagonal.
pub(crate) fn householder_qr(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (n, d) = a.shape();
    assert!(n >= d, "householder_qr needs rows >= cols");
    // Column-major working copy; reflectors are applied column by column.
    let mut cols: Vec<Vec<f64>> = (0..d).map(|j| a.column(j)).collect();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(d);
    for k in 0..d {
        let x = &cols[k][k..];
        let alpha = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = x.to_vec();
        if alpha == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        for col in cols.iter_mut().skip(k) {
            let tail = &mut col[k..];
            let f = 2.0 * dot(&v, tail) / vnorm2;
            for (t, vi) in tail.iter_mut().zip(&v) {
                *t -= f * vi;
            }
        }
        // Exact zeros below the diagonal.
        for t in cols[k][k + 1..].iter_mut() {
            *t = 0.0;
        }
        reflectors.push(v);
    }

    let mut t = DenseMatrix::zeros(d, d);
    for (j, col) in cols.iter().enumerate() {
        for i in 0..=j {
            t[(i, j)] = col[i];
        }
    }

    // Q = H_0 H_1 ... H_{d-1} applied to the first d columns of the identity.
    let mut q_cols: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    for (k, v) in reflectors.iter().enumerate().rev() {
        if v.is_empty() {
            continue;
        }
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        for col in q_cols.iter_mut() {
            let tail = &mut col[k..];
            let f = 2.0 * dot(v, tail) / vnorm2;
            for (x, vi) in tail.iter_mut().zip(v) {
                *x -= f * vi;
            }
        }
    }

    // Sign convention: nonnegative diagonal of T.
    for k in 0..d {
        if t[(k, k)] < 0.0 {
            for j in k..d {
                t[(k, j)] = -t[(k, j)];
            }
            q_cols[k].iter_mut().for_each(|x| *x = -*x);
        }
    }

    let mut q = DenseMatrix::zeros(n, d);
    for (j, col) in q_cols.iter().enumerate() {
        q.set_column(j, col);
    }
    (q, t)
}

/// Thin QR factorization `A = Q T` of a full-column-rank matrix.
///
/// The diagonal of `T` is nonnegative. Fails with `RankDeficient` when the
/// smallest singular value is at most `1e-10` times the largest.
pub fn qr_factor(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let (n, d) = a.shape();
    if n < d || d == 0 {
        return Err(Error::BadDims(format!("qr of a {n}x{d} matrix needs n >= d >= 1")));
    }
    let (q, t) = householder_qr(a);
    let sv = jacobi_singular_values(&t);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
        return Err(Error::RankDeficient { ratio });
    }
    Ok((q, t))
}

/// One-sided Jacobi singular values of a small matrix (rows >= cols).
fn jacobi_singular_values(a: &DenseMatrix) -> Vec<f64> {
    let d = a.cols();
    let mut cols: Vec<Vec<f64>> = (0..d).map(|j| a.column(j)).collect();
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..d {
            for j in i + 1..d {
                let alpha = dot(&cols[i], &cols[i]);
                let beta = dot(&cols[j], &cols[j]);
                let gamma = dot(&cols[i], &cols[j]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(j);
                let (ci, cj) = (&mut left[i], &mut right[0]);
                for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
                    let (xi, yj) = (*x, *y);
                    *x = c * xi - s * yj;
                    *y = s * xi + c * yj;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    cols.iter().map(|c| dot(c, c).sqrt()).collect()
}

/// The `d` singular values of an m×d matrix, ascending.
///
/// For m >= d the matrix is first reduced to its d×d triangular factor and
/// the factor is diagonalized by one-sided Jacobi rotations. For m < d the
/// missing values are zeros (the eigenvalues of AᵀA).
pub fn singular_values(a: &DenseMatrix) -> SpectrumSet {
    let (m, d) = a.shape();
    if d == 0 {
        return SpectrumSet::new(Vec::new());
    }
    if m >= d {
        let (_, t) = householder_qr(a);
        SpectrumSet::new(jacobi_singular_values(&t))
    } else {
        let mut values = singular_values(&a.transpose()).into_values();
        values.resize(d, 0.0);
        SpectrumSet::new(values)
    }
}

/// Eigenvalues of a symmetric matrix (upper triangle is read), ascending.
pub fn symmetric_eigenvalues(a: &DenseMatrix) -> Result<SpectrumSet> {
    let (n, c) = a.shape();
    if n != c {
        return Err(Error::DimMismatch(format!("eigenvalues of a {n}x{c} matrix")));
    }
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| if i <= j { a[(i, j)] } else { a[(j, i)] });
    let eig = nalgebra::SymmetricEigen::new(m);
    Ok(SpectrumSet::new(eig.eigenvalues.iter().cloned().collect()))
}

/// Inverse of an upper triangular matrix by back-substitution.
pub fn upper_triangular_inverse(t: &DenseMatrix) -> Result<DenseMatrix> {
    let d = t.rows();
    if t.cols() != d {
        return Err(Error::DimMismatch("triangular inverse of a non-square matrix".into()));
    }
    let mut inv = DenseMatrix::zeros(d, d);
    for col in 0..d {
        // Solve T x = e_col.
        for i in (0..=col).rev() {
            let mut acc = if i == col { 1.0 } else { 0.0 };
            for k in i + 1..=col {
                acc -= t[(i, k)] * inv[(k, col)];
            }
            let diag = t[(i, i)];
            if diag == 0.0 {
                return Err(Error::RankDeficient { ratio: 0.0 });
            }
            inv[(i, col)] = acc / diag;
        }
    }
    Ok(inv)
}

/// Solves `T x = y` for upper triangular `T`.
pub fn back_substitute(t: &DenseMatrix, y: &[f64]) -> Result<Vec<f64>> {
    let d = t.rows();
    if y.len() != d {
        return Err(Error::DimMismatch("back substitution length".into()));
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut acc = y[i];
        for k in i + 1..d {
            acc -= t[(i, k)] * x[k];
        }
        if t[(i, i)] == 0.0 {
            return Err(Error::RankDeficient { ratio: 0.0 });
        }
        x[i] = acc / t[(i, i)];
    }
    Ok(x)
}

/// Least-squares solution of `min ‖A x − b‖₂` via QR.
pub fn lstsq(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::DimMismatch("right-hand side length".into()));
    }
    let (q, t) = qr_factor(a)?;
    let qtb = q.t_matvec(b)?;
    back_substitute(&t, &qtb)
}

/// Solves the symmetric positive definite system `M x = y` by Cholesky.
pub fn cholesky_solve(m: &DenseMatrix, y: &[f64]) -> Result<Vec<f64>> {
    let n = m.rows();
    if m.cols() != n || y.len() != n {
        return Err(Error::DimMismatch("cholesky system shape".into()));
    }
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag <= 0.0 {
            return Err(Error::RankDeficient { ratio: 0.0 });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut acc = m[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = acc / ljj;
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut acc = y[i];
        for k in 0..i {
            acc -= l[(i, k)] * z[k];
        }
        z[i] = acc / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = z[i];
        for k in i + 1..n {
            acc -= l[(k, i)] * x[k];
        }
        x[i] = acc / l[(i, i)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_qr() {
        let (q, t) = qr_factor(&DenseMatrix::identity(3)).unwrap();
        assert!(q.max_abs_diff(&DenseMatrix::identity(3)) < 1e-15);
        assert!(t.max_abs_diff(&DenseMatrix::identity(3)) < 1e-15);
    }

    #[test]
    fn orthogonal_columns_qr() {
        let a = DenseMatrix::from_rows(&[&[2.0, 0.0], &[0.0, 3.0], &[0.0, 0.0]]);
        let (q, t) = qr_factor(&a).unwrap();
        let want_q = DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        assert!(q.max_abs_diff(&want_q) < 1e-15);
        assert!(t.max_abs_diff(&DenseMatrix::from_rows(&[&[2.0, 0.0], &[0.0, 3.0]])) < 1e-15);
    }

    #[test]
    fn rank_deficient_rejected() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]);
        assert!(matches!(qr_factor(&a), Err(Error::RankDeficient { .. })));
        assert!(matches!(qr_factor(&DenseMatrix::zeros(4, 2)), Err(Error::RankDeficient { .. })));
        assert!(qr_factor(&DenseMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn diagonal_singular_values() {
        let a = DenseMatrix::from_rows(&[&[3.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]]);
        let s = singular_values(&a);
        assert!((s.values()[0] - 1.0).abs() < 1e-14);
        assert!((s.values()[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_singular_values() {
        let s = singular_values(&DenseMatrix::zeros(5, 3));
        assert_eq!(s.values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn wide_matrix_pads_zeros() {
        let a = DenseMatrix::from_rows(&[&[1.0, 0.0, 0.0]]);
        let s = singular_values(&a);
        assert_eq!(s.len(), 3);
        assert_eq!(&s.values()[..2], &[0.0, 0.0]);
        assert!((s.values()[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn triangular_inverse_and_solve() {
        let t = DenseMatrix::from_rows(&[&[2.0, 1.0, 0.5], &[0.0, 3.0, -1.0], &[0.0, 0.0, 4.0]]);
        let inv = upper_triangular_inverse(&t).unwrap();
        assert!(t.matmul(&inv).unwrap().max_abs_diff(&DenseMatrix::identity(3)) < 1e-14);
        let x = back_substitute(&t, &[1.0, 2.0, 3.0]).unwrap();
        let y = t.matvec(&x).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-14 && (y[1] - 2.0).abs() < 1e-14 && (y[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn cholesky_matches_direct() {
        let m = DenseMatrix::from_rows(&[&[4.0, 1.0], &[1.0, 3.0]]);
        let x = cholesky_solve(&m, &[1.0, 2.0]).unwrap();
        let y = m.matvec(&x).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-14 && (y[1] - 2.0).abs() < 1e-14);
    }
}
