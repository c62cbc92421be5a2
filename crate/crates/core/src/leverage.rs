//! Leverage scores: exact, fast Gaussian-probe estimates, validation and a
//! flat binary encoding.

use crate::error::{Error, Result};
use crate::linalg::{qr_factor, DenseMatrix};
use crate::randbits::BitSource;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Relative floor applied to estimated scores: `FLOOR_FACTOR · d / n`.
pub const FLOOR_FACTOR: f64 = 1e-12;

/// Approximate leverage scores with their approximation factors.
#[derive(Debug, Clone, PartialEq)]
pub struct LeverageScoreSet {
    scores: Vec<f64>,
    beta1: f64,
    beta2: f64,
    d: usize,
    floored: Vec<usize>,
}

impl LeverageScoreSet {
    pub fn new(scores: Vec<f64>, beta1: f64, beta2: f64, d: usize) -> Result<Self> {
        if let Some(i) = scores.iter().position(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::BadParams(format!("score {i} is {}", scores[i])));
        }
        if !(beta1 >= 1.0 && beta2 >= 1.0) || !beta1.is_finite() || !beta2.is_finite() {
            return Err(Error::BadParams(format!("betas must be >= 1, got ({beta1}, {beta2})")));
        }
        Ok(Self {
            scores,
            beta1,
            beta2,
            d,
            floored: Vec::new(),
        })
    }

    /// `l_j = d/n` for every row.
    pub fn uniform(n: usize, d: usize, beta1: f64, beta2: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::BadDims("uniform scores need n >= 1".into()));
        }
        Self::new(vec![d as f64 / n as f64; n], beta1, beta2, d)
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Result<Self> {
        let floored = std::mem::take(&mut self.floored);
        let mut out = Self::new(self.scores, beta1, beta2, self.d)?;
        out.floored = floored;
        Ok(out)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn beta2(&self) -> f64 {
        self.beta2
    }

    /// α = β₁β₂.
    pub fn alpha(&self) -> f64 {
        self.beta1 * self.beta2
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn sum(&self) -> f64 {
        self.scores.iter().sum()
    }

    /// Rows whose estimate was raised to the floor.
    pub fn floored_rows(&self) -> &[usize] {
        &self.floored
    }

    /// Raises every score below `floor` to `floor` and records the rows.
    pub fn apply_floor(&mut self, floor: f64) {
        for (i, l) in self.scores.iter_mut().enumerate() {
            if *l < floor {
                *l = floor;
                self.floored.push(i);
            }
        }
    }

    /// Zero-padded to `n` rows (padded rows get score 0).
    pub fn padded(&self, n: usize) -> Self {
        assert!(n >= self.scores.len());
        let mut out = self.clone();
        out.scores.resize(n, 0.0);
        out
    }
}

/// Exact scores: squared row norms of the Q factor of `a`.
pub fn exact_scores(a: &DenseMatrix) -> Result<LeverageScoreSet> {
    let (q, _) = qr_factor(a)?;
    LeverageScoreSet::new(q.row_norms_squared(), 1.0, 1.0, a.cols())
}

/// Squared row norms of an orthonormal basis that is already in hand.
pub fn orthonormal_scores(u: &DenseMatrix) -> LeverageScoreSet {
    LeverageScoreSet::new(u.row_norms_squared(), 1.0, 1.0, u.cols()).expect("row norms are valid scores")
}

/// Probe count ⌈1/γ⌉.
pub fn probe_count(gamma: f64) -> usize {
    assert!(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1]");
    (1.0 / gamma).ceil() as usize
}

/// Estimates `‖e_iᵀ A R‖²` by `‖e_iᵀ A (R G)‖²` with G a d×k Gaussian
/// matrix scaled by 1/√k. `AR` is never formed: `RG` is d×k and the n×d
/// product with A is the only pass over A. Estimates below
/// `FLOOR_FACTOR · d/n` are floored and flagged.
pub fn fast_scores(a: &DenseMatrix, r: &DenseMatrix, k: usize, src: &mut BitSource) -> Result<LeverageScoreSet> {
    let (n, d) = a.shape();
    if r.rows() != d {
        return Err(Error::DimMismatch(format!("A is {n}x{d} but R is {}x{}", r.rows(), r.cols())));
    }
    if k == 0 {
        return Err(Error::BadParams("probe count must be >= 1".into()));
    }
    let inv = 1.0 / (k as f64).sqrt();
    let g = DenseMatrix::from_fn(r.cols(), k, |_, _| src.gaussian() * inv);
    let rg = r.matmul(&g)?;
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = a.row(i);
            (0..k)
                .map(|c| {
                    let v: f64 = row.iter().enumerate().map(|(j, &x)| x * rg[(j, c)]).sum();
                    v * v
                })
                .sum()
        })
        .collect();
    let mut set = LeverageScoreSet::new(scores, 1.0, 1.0, d)?;
    if n > 0 {
        set.apply_floor(FLOOR_FACTOR * d as f64 / n as f64);
    }
    Ok(set)
}

/// Outcome of checking scores against a reference orthonormal basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreValidation {
    pub ok: bool,
    /// Largest `‖e_iᵀU‖²/β₁ − l_i`; positive values are violations.
    pub worst_violation: f64,
    pub worst_row: usize,
    /// `Σ l_i / d`, to be compared with β₂.
    pub mass_ratio: f64,
}

/// Checks `‖e_iᵀU‖²/β₁ ≤ l_i` for every row and `Σ l_i ≤ β₂ d`.
pub fn validate_scores(set: &LeverageScoreSet, u: &DenseMatrix) -> Result<ScoreValidation> {
    if set.len() != u.rows() {
        return Err(Error::DimMismatch(format!("{} scores for {} rows", set.len(), u.rows())));
    }
    let exact = u.row_norms_squared();
    let (worst_row, worst_violation) = exact
        .iter()
        .zip(set.scores())
        .map(|(&e, &l)| e / set.beta1() - l)
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let d = u.cols().max(1) as f64;
    let mass_ratio = set.sum() / d;
    let tol = 1e-12;
    Ok(ScoreValidation {
        ok: worst_violation <= tol && mass_ratio <= set.beta2() * (1.0 + tol),
        worst_violation,
        worst_row,
        mass_ratio,
    })
}

/// JSON metadata stored beside the binary score array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoresMeta {
    pub schema: u32,
    pub n: usize,
    pub d: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub floored: Vec<usize>,
}

impl ScoresMeta {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Little-endian f64 array plus its metadata.
pub fn encode_scores(set: &LeverageScoreSet) -> (Vec<u8>, ScoresMeta) {
    let bytes = set.scores.iter().flat_map(|l| l.to_le_bytes()).collect();
    let meta = ScoresMeta {
        schema: 1,
        n: set.len(),
        d: set.d,
        beta1: set.beta1,
        beta2: set.beta2,
        floored: set.floored.clone(),
    };
    (bytes, meta)
}

pub fn decode_scores(bytes: &[u8], meta: &ScoresMeta) -> Result<LeverageScoreSet> {
    if meta.schema != 1 {
        return Err(Error::Config(format!("unsupported scores schema {}", meta.schema)));
    }
    if bytes.len() % 8 != 0 || bytes.len() / 8 != meta.n {
        return Err(Error::BadDims(format!(
            "{} bytes do not hold {} little-endian f64 scores",
            bytes.len(),
            meta.n
        )));
    }
    if let Some(&i) = meta.floored.iter().find(|&&i| i >= meta.n) {
        return Err(Error::BadDims(format!("floored row {i} outside 0..{}", meta.n)));
    }
    let scores = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mut set = LeverageScoreSet::new(scores, meta.beta1, meta.beta2, meta.d)?;
    set.floored = meta.floored.clone();
    Ok(set)
}

/// Writes `<stem>.bin` and `<stem>.json`.
pub fn save_scores(set: &LeverageScoreSet, bin: impl AsRef<Path>, json: impl AsRef<Path>) -> Result<()> {
    let (bytes, meta) = encode_scores(set);
    std::fs::write(bin, bytes)?;
    std::fs::write(json, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_scores(bin: impl AsRef<Path>, json: impl AsRef<Path>) -> Result<LeverageScoreSet> {
    let bytes = std::fs::read(bin)?;
    let meta = ScoresMeta::parse(&std::fs::read_to_string(json)?)?;
    decode_scores(&bytes, &meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthonormal;

    #[test]
    fn exact_small_cases() {
        let u = DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        let s = exact_scores(&u).unwrap();
        for (a, b) in s.scores().iter().zip([1.0, 1.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let h = 1.0 / 2f64.sqrt();
        let s = exact_scores(&DenseMatrix::from_rows(&[&[h], &[h]])).unwrap();
        assert!((s.scores()[0] - 0.5).abs() < 1e-12 && (s.scores()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn validation_cases() {
        let u = random_orthonormal(40, 3, 5).unwrap();
        let exact = orthonormal_scores(&u);
        assert!(validate_scores(&exact, &u).unwrap().ok);
        let halved = LeverageScoreSet::new(exact.scores().iter().map(|l| l / 2.0).collect(), 2.0, 1.0, 3).unwrap();
        assert!(validate_scores(&halved, &u).unwrap().ok);
        let mut zeroed = exact.scores().to_vec();
        zeroed[7] = 0.0;
        let v = validate_scores(&LeverageScoreSet::new(zeroed, 1.0, 1.0, 3).unwrap(), &u).unwrap();
        assert!(!v.ok);
        assert_eq!(v.worst_row, 7);
        assert!(v.worst_violation > 0.0);
    }

    #[test]
    fn fast_scores_of_zero_are_floored_zero() {
        let a = DenseMatrix::zeros(10, 2);
        let mut src = BitSource::new(1);
        let s = fast_scores(&a, &DenseMatrix::identity(2), 4, &mut src).unwrap();
        assert!(s.scores().iter().all(|&l| l == FLOOR_FACTOR * 0.2));
        assert_eq!(s.floored_rows().len(), 10);
    }

    #[test]
    fn binary_round_trip() {
        let mut s = LeverageScoreSet::new(vec![0.25, 1e-300, 0.0, 0.75], 2.0, 1.5, 1).unwrap();
        s.apply_floor(1e-20);
        let (bytes, meta) = encode_scores(&s);
        assert_eq!(bytes.len(), 32);
        assert_eq!(decode_scores(&bytes, &meta).unwrap(), s);
        assert!(decode_scores(&bytes[..31], &meta).is_err());
    }

    #[test]
    fn probe_default() {
        assert_eq!(probe_count(0.25), 4);
        assert_eq!(probe_count(0.3), 4);
    }
}
