//! Walsh–Hadamard transform, the randomized Hadamard transform and its
//! composition with a uniform-score LESS sketch.

use crate::error::{Error, Result};
use crate::leverage::LeverageScoreSet;
use crate::linalg::DenseMatrix;
use crate::randbits::BitSource;
use crate::sketch::{build_from, check_input, LinearSketch, SketchKind, SketchParams, SparseSketch};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Score overestimate factor used by [`Fjlt`]; squared row norms after the
/// RHT stay below `FJLT_BETA1 · d/n` with high probability.
pub const FJLT_BETA1: f64 = 16.0;

/// In-place unnormalized Walsh–Hadamard transform, lowest stride first.
pub fn hadamard_apply(x: &mut [f64]) -> Result<()> {
    let n = x.len();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            let (lo, hi) = x[start..start + 2 * h].split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*a, *b);
                *a = u + v;
                *b = u - v;
            }
        }
        h *= 2;
    }
    Ok(())
}

/// `(1/√n)·H·D` with zero padding of the input to n = 2^k rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RhtOperator {
    n: usize,
    original_rows: usize,
    signs: Vec<f64>,
    bits: u64,
}

impl RhtOperator {
    /// Random signs for an input with `original_rows` rows.
    pub fn new(original_rows: usize, src: &mut BitSource) -> Result<Self> {
        if original_rows == 0 {
            return Err(Error::BadDims("RHT needs at least one row".into()));
        }
        let n = original_rows.next_power_of_two();
        let before = src.bits_consumed();
        let signs = src.draw_bits(n).into_iter().map(|b| if b { -1.0 } else { 1.0 }).collect();
        Ok(Self {
            n,
            original_rows,
            signs,
            bits: src.bits_consumed() - before,
        })
    }

    /// Fixed signs; `signs.len()` must be a power of two ≥ `original_rows`.
    pub fn with_signs(original_rows: usize, signs: Vec<f64>) -> Result<Self> {
        let n = signs.len();
        if !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n));
        }
        if original_rows > n || original_rows == 0 {
            return Err(Error::DimMismatch(format!("{original_rows} rows for an RHT of size {n}")));
        }
        if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::BadParams("RHT signs must be +1 or -1".into()));
        }
        Ok(Self {
            n,
            original_rows,
            signs,
            bits: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn original_rows(&self) -> usize {
        self.original_rows
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    /// Pads, flips signs, transforms each column and scales by 1/√n.
    pub fn apply(&self, u: &DenseMatrix) -> Result<DenseMatrix> {
        if u.rows() != self.original_rows {
            return Err(Error::DimMismatch(format!(
                "RHT expects {} rows, got {}",
                self.original_rows,
                u.rows()
            )));
        }
        let (n, d) = (self.n, u.cols());
        let norm = 1.0 / (n as f64).sqrt();
        let columns: Vec<Vec<f64>> = (0..d)
            .into_par_iter()
            .map(|j| {
                let mut col = vec![0.0; n];
                for i in 0..self.original_rows {
                    col[i] = self.signs[i] * u[(i, j)];
                }
                hadamard_apply(&mut col).expect("power-of-two length");
                col.iter_mut().for_each(|v| *v *= norm);
                col
            })
            .collect();
        Ok(DenseMatrix::from_fn(n, d, |i, j| columns[j][i]))
    }
}

impl LinearSketch for RhtOperator {
    fn input_dim(&self) -> usize {
        self.original_rows
    }

    fn output_dim(&self) -> usize {
        self.n
    }

    fn apply(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        RhtOperator::apply(self, a)
    }

    fn bits_used(&self) -> u64 {
        self.bits
    }
}

/// Per-trial outcome rates of the RHT row-norm bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowNormCheck {
    /// Fraction with max row norm < √(d/n) + √(8 ln(n/δ)/n).
    pub pass_fraction: f64,
    /// Fraction with max squared row norm < 16d/n.
    pub strict_fraction: f64,
}

/// Applies `trials` independent RHTs to an orthonormal `u` (n a power of
/// two) and reports how often the row-norm bounds hold.
pub fn rht_max_row_norm_check(u: &DenseMatrix, trials: usize, delta: f64, seed: u64) -> Result<RowNormCheck> {
    let (n, d) = u.shape();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    if trials == 0 || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::BadParams("need trials >= 1 and delta in (0, 1)".into()));
    }
    let (nf, df) = (n as f64, d as f64);
    let bound = (df / nf).sqrt() + (8.0 * (nf / delta).ln() / nf).sqrt();
    let strict = 16.0 * df / nf;
    let root = BitSource::new(seed);
    let outcomes: Vec<(bool, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(bool, bool)> {
            let op = RhtOperator::new(n, &mut root.derive(t as u64))?;
            let max_sq = op.apply(u)?.row_norms_squared().into_iter().fold(0.0, f64::max);
            Ok((max_sq.sqrt() < bound, max_sq < strict))
        })
        .collect::<Result<_>>()?;
    let frac = |f: fn(&(bool, bool)) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / trials as f64;
    Ok(RowNormCheck {
        pass_fraction: frac(|o| o.0),
        strict_fraction: frac(|o| o.1),
    })
}

/// A LESS sketch with uniform scores applied after an RHT.
#[derive(Debug, Clone, PartialEq)]
pub struct Fjlt {
    rht: RhtOperator,
    phi: SparseSketch,
}

impl Fjlt {
    /// Builds `Φ·(1/√n)HD` for inputs with `rows` rows and a d-dimensional
    /// subspace. Φ is `kind` (LESS-IND-ENT or LESS-IND-ROWS) with m rows,
    /// parameter p and uniform scores d/n at β₁ = 16, β₂ = 1, where n is the
    /// padded size. Parameters with δ ≤ 2n/e^d are refused.
    pub fn new(kind: SketchKind, rows: usize, d: usize, m: usize, p: f64, delta: f64, seed: u64, root: &BitSource) -> Result<Self> {
        if !kind.needs_scores() {
            return Err(Error::BadParams(format!("the sparse stage must be a LESS kind, got {kind}")));
        }
        let rht = RhtOperator::new(rows, &mut root.derive(0))?;
        let n = rht.n();
        if !(delta > 0.0 && delta < 1.0) || delta <= 2.0 * n as f64 * (-(d as f64)).exp() {
            return Err(Error::BadParams(format!(
                "delta = {delta} is outside the supported regime (needs delta > 2n/e^d with n = {n}, d = {d})"
            )));
        }
        let scores = LeverageScoreSet::uniform(n, d, FJLT_BETA1, 1.0)?;
        let params = SketchParams::new(kind, m, n, p, seed).with_scores(scores);
        let phi = build_from(&params, &root.derive(1))?;
        Ok(Self { rht, phi })
    }

    pub fn rht(&self) -> &RhtOperator {
        &self.rht
    }

    pub fn phi(&self) -> &SparseSketch {
        &self.phi
    }
}

impl LinearSketch for Fjlt {
    fn input_dim(&self) -> usize {
        self.rht.original_rows()
    }

    fn output_dim(&self) -> usize {
        self.phi.m()
    }

    fn apply(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        check_input(self, a)?;
        self.phi.apply(&self.rht.apply(a)?)
    }

    fn bits_used(&self) -> u64 {
        self.rht.bits + self.phi.bits_used()
    }

    fn nnz(&self) -> Option<usize> {
        Some(self.phi.matrix().nnz())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthonormal;

    #[test]
    fn small_transforms() {
        let mut x = [5.0];
        hadamard_apply(&mut x).unwrap();
        assert_eq!(x, [5.0]);
        let mut x = [1.0, 0.0];
        hadamard_apply(&mut x).unwrap();
        assert_eq!(x, [1.0, 1.0]);
        let mut x = [1.0, 2.0, 3.0, 4.0];
        hadamard_apply(&mut x).unwrap();
        assert_eq!(x, [10.0, -2.0, -4.0, 0.0]);
        assert!(matches!(hadamard_apply(&mut [1.0; 3]), Err(Error::NotPowerOfTwo(3))));
        assert!(matches!(hadamard_apply(&mut []), Err(Error::NotPowerOfTwo(0))));
    }

    #[test]
    fn forced_signs_give_hadamard_column() {
        let op = RhtOperator::with_signs(8, vec![1.0; 8]).unwrap();
        let mut e1 = DenseMatrix::zeros(8, 1);
        e1[(0, 0)] = 1.0;
        let out = op.apply(&e1).unwrap();
        assert!(out.data().iter().all(|&v| (v - 1.0 / 8f64.sqrt()).abs() < 1e-15));
    }

    #[test]
    fn padding_preserves_orthonormality() {
        let u = random_orthonormal(100, 5, 2).unwrap();
        let op = RhtOperator::new(100, &mut BitSource::new(1)).unwrap();
        assert_eq!(op.n(), 128);
        assert_eq!(op.bits_used(), 128);
        let y = op.apply(&u).unwrap();
        assert_eq!(y.shape(), (128, 5));
        assert!(y.orthonormality_defect() < 1e-12);
    }

    #[test]
    fn fjlt_refuses_small_d() {
        let r = Fjlt::new(SketchKind::LessIndRows, 1024, 2, 64, 0.25, 0.1, 0, &BitSource::new(0));
        assert!(matches!(r, Err(Error::BadParams(_))));
        let r = Fjlt::new(SketchKind::IidEnt, 1024, 16, 64, 0.25, 0.1, 0, &BitSource::new(0));
        assert!(r.is_err());
    }

    #[test]
    fn fjlt_zero_in_zero_out() {
        let f = Fjlt::new(SketchKind::LessIndEnt, 1000, 16, 64, 0.25, 0.1, 0, &BitSource::new(3)).unwrap();
        let z = f.apply(&DenseMatrix::zeros(1000, 4)).unwrap();
        assert_eq!(z, DenseMatrix::zeros(64, 4));
    }
}
