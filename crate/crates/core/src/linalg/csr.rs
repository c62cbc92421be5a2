//! Compressed sparse row storage used for every sketch.

use super::dense::DenseMatrix;
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Rows × cols sparse matrix in CSR layout.
///
/// Invariants: `offsets.len() == rows + 1`, offsets are nondecreasing,
/// column indices inside a row are strictly increasing and `< cols`, and no
/// explicit zeros are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

/// Minimum, maximum and mean of a nonzero count profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnzStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

impl NnzStats {
    pub fn from_counts(counts: &[usize]) -> Self {
        if counts.is_empty() {
            return Self { min: 0, max: 0, mean: 0.0 };
        }
        let min = *counts.iter().min().unwrap();
        let max = *counts.iter().max().unwrap();
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        Self { min, max, mean }
    }
}

impl CsrMatrix {
    /// Builds a CSR matrix from `(row, col, value)` triplets. Duplicates are
    /// summed and entries that end up exactly zero are dropped.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
        for &(i, j, v) in triplets {
            if i >= rows || j >= cols {
                return Err(Error::BadDims(format!("entry ({i}, {j}) outside a {rows}x{cols} matrix")));
            }
            if !v.is_finite() {
                return Err(Error::BadDims(format!("entry ({i}, {j}) is not finite")));
            }
            per_row[i].push((j, v));
        }
        Ok(Self::from_row_lists(rows, cols, per_row))
    }

    /// Builds from per-row `(col, value)` lists; columns must be `< cols`.
    pub(crate) fn from_row_lists(rows: usize, cols: usize, mut per_row: Vec<Vec<(usize, f64)>>) -> Self {
        debug_assert_eq!(per_row.len(), rows);
        let mut offsets = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for row in per_row.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                debug_assert!(j < cols);
                let mut acc = 0.0;
                while k < row.len() && row[k].0 == j {
                    acc += row[k].1;
                    k += 1;
                }
                if acc != 0.0 {
                    indices.push(j);
                    values.push(acc);
                }
            }
            offsets.push(indices.len());
        }
        Self {
            rows,
            cols,
            offsets,
            indices,
            values,
        }
    }

    pub fn from_dense(a: &DenseMatrix) -> Self {
        let per_row = (0..a.rows())
            .map(|i| {
                a.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Self::from_row_lists(a.rows(), a.cols(), per_row)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    /// Iterates `(row, col, value)` over stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (idx, val) = self.row(i);
            idx.iter().zip(val).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (idx, val) = self.row(i);
        match idx.binary_search(&j) {
            Ok(k) => val[k],
            Err(_) => 0.0,
        }
    }

    pub fn row_nnz(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn col_nnz(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cols];
        for &j in &self.indices {
            counts[j] += 1;
        }
        counts
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            out[(i, j)] = v;
        }
        out
    }

    /// `scale * (self * a)`; rows of the output are computed in parallel.
    pub fn mul_dense_scaled(&self, a: &DenseMatrix, scale: f64) -> Result<DenseMatrix> {
        if self.cols != a.rows() {
            return Err(Error::DimMismatch(format!(
                "sparse {}x{} times dense {}x{}",
                self.rows,
                self.cols,
                a.rows(),
                a.cols()
            )));
        }
        let d = a.cols();
        let mut out = DenseMatrix::zeros(self.rows, d);
        if d == 0 {
            return Ok(out);
        }
        out.data_mut().par_chunks_mut(d).enumerate().for_each(|(i, out_row)| {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                for (o, &x) in out_row.iter_mut().zip(a.row(j)) {
                    *o += v * x;
                }
            }
            if scale != 1.0 {
                out_row.iter_mut().for_each(|o| *o *= scale);
            }
        });
        Ok(out)
    }

    /// Checks the structural invariants; used by tests and loaders.
    pub fn validate(&self) -> Result<()> {
        if self.offsets.len() != self.rows + 1 || self.offsets[0] != 0 {
            return Err(Error::BadDims("offsets length".into()));
        }
        if *self.offsets.last().unwrap() != self.indices.len() || self.indices.len() != self.values.len() {
            return Err(Error::BadDims("offsets do not cover the entries".into()));
        }
        for i in 0..self.rows {
            if self.offsets[i] > self.offsets[i + 1] {
                return Err(Error::BadDims(format!("offsets decrease at row {i}")));
            }
            let (idx, val) = self.row(i);
            if idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::BadDims(format!("row {i} columns not strictly increasing")));
            }
            if idx.iter().any(|&j| j >= self.cols) {
                return Err(Error::BadDims(format!("row {i} column out of range")));
            }
            if val.iter().any(|&v| v == 0.0 || !v.is_finite()) {
                return Err(Error::BadDims(format!("row {i} stores a zero or non-finite value")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_sum_and_zeros_compact() {
        let s = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, -1.0), (1, 1, 1.0), (1, 1, 1.0)]).unwrap();
        s.validate().unwrap();
        assert_eq!(s.nnz(), 2);
        assert_eq!(s.get(0, 0), 2.0);
        assert_eq!(s.get(0, 2), 0.0);
        assert_eq!(s.get(1, 1), 2.0);
        assert_eq!(s.row_nnz(), vec![1, 1]);
        assert_eq!(s.col_nnz(), vec![1, 1, 0]);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn multiply_matches_dense() {
        let s = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, -2.0), (1, 1, 3.0)]).unwrap();
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let got = s.mul_dense_scaled(&a, 0.5).unwrap();
        let mut want = s.to_dense().matmul(&a).unwrap();
        want.scale_in_place(0.5);
        assert_eq!(got, want);
    }
}
