//! Sparse sketching distributions and the operator interface shared by every
//! embedding in the crate.
//!
//! Stored values are unscaled (±1, or ±1/√(β₁l_j) for the LESS kinds) and the
//! global factor 1/√(pm) lives in [`SparseSketch::scale`], applied exactly
//! once by [`SparseSketch::apply`].

mod build;
mod dense_ops;
mod sidecar;

pub use build::{build, build_from, build_one_hot, build_osnap_hashed};
pub use dense_ops::{GaussianSketch, Identity};
pub use sidecar::{load_sketch, save_sketch, sketch_from_parts, SketchSidecar};

use crate::error::{Error, Result};
use crate::leverage::LeverageScoreSet;
use crate::linalg::{CsrMatrix, DenseMatrix, NnzStats};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// A linear map from `input_dim` to `output_dim` rows, scale included.
pub trait LinearSketch: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// `S·A` for an `input_dim`-row matrix `A`.
    fn apply(&self, a: &DenseMatrix) -> Result<DenseMatrix>;
    /// Uniform random bits consumed to construct the operator.
    fn bits_used(&self) -> u64;
    /// Stored nonzeros, for operators that have a sparse representation.
    fn nnz(&self) -> Option<usize> {
        None
    }
}

pub(crate) fn check_input(op: &dyn LinearSketch, a: &DenseMatrix) -> Result<()> {
    if a.rows() != op.input_dim() {
        return Err(Error::DimMismatch(format!(
            "operator takes {} rows, matrix has {}",
            op.input_dim(),
            a.rows()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SketchKind {
    /// Independent entries, each nonzero with probability p.
    IidEnt,
    /// s = pm blocks per column, one ±1 per block.
    OsnapIndCol,
    /// Sum of np randomly placed wrapped diagonals of pairwise-independent signs.
    IndDiag,
    /// Independent entries with column-dependent probability β₁l_jp.
    LessIndEnt,
    /// Each row a sum of β₁pΣl one-position terms drawn proportionally to l.
    LessIndRows,
    /// OSNAP whose block positions come from k-wise independent hashes.
    OsnapHashed,
}

impl SketchKind {
    /// The five distributions with fully independent summands.
    pub const ALL: [SketchKind; 5] = [
        SketchKind::IidEnt,
        SketchKind::OsnapIndCol,
        SketchKind::IndDiag,
        SketchKind::LessIndEnt,
        SketchKind::LessIndRows,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SketchKind::IidEnt => "iid-ent",
            SketchKind::OsnapIndCol => "osnap-ind-col",
            SketchKind::IndDiag => "ind-diag",
            SketchKind::LessIndEnt => "less-ind-ent",
            SketchKind::LessIndRows => "less-ind-rows",
            SketchKind::OsnapHashed => "osnap-hashed",
        }
    }

    pub fn needs_scores(self) -> bool {
        matches!(self, SketchKind::LessIndEnt | SketchKind::LessIndRows)
    }
}

impl fmt::Display for SketchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SketchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SketchKind::IidEnt,
            SketchKind::OsnapIndCol,
            SketchKind::IndDiag,
            SketchKind::LessIndEnt,
            SketchKind::LessIndRows,
            SketchKind::OsnapHashed,
        ]
        .into_iter()
        .find(|k| k.name() == s.to_ascii_lowercase())
        .ok_or_else(|| Error::BadParams(format!("unknown sketch kind '{s}'")))
    }
}

/// Policy for summand counts (np, pm, β₁pΣl) that are not integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    /// Reject with `NonIntegerCount` / `DivisibilityViolated`.
    #[default]
    Reject,
    /// Round the count up and rescale p so the variance identity stays exact.
    Up,
}

/// Parameters of one sketch draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchParams {
    pub kind: SketchKind,
    pub m: usize,
    pub n: usize,
    pub p: f64,
    pub seed: u64,
    pub scores: Option<LeverageScoreSet>,
    pub rounding: Rounding,
    /// LESS-IND-ENT: clamp probabilities above 1 instead of failing.
    pub clamp: bool,
    /// OSNAP-HASHED: independence of the position hashes.
    pub independence: usize,
}

impl SketchParams {
    pub fn new(kind: SketchKind, m: usize, n: usize, p: f64, seed: u64) -> Self {
        Self {
            kind,
            m,
            n,
            p,
            seed,
            scores: None,
            rounding: Rounding::Reject,
            clamp: true,
            independence: 2,
        }
    }

    pub fn with_scores(mut self, scores: LeverageScoreSet) -> Self {
        self.scores = Some(scores);
        self
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn with_clamp(mut self, clamp: bool) -> Self {
        self.clamp = clamp;
        self
    }

    pub fn with_independence(mut self, k: usize) -> Self {
        self.independence = k;
        self
    }
}

/// An m×n sparse sketch with its scale and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSketch {
    pub(crate) matrix: CsrMatrix,
    pub(crate) kind: SketchKind,
    pub(crate) p: f64,
    pub(crate) seed: u64,
    pub(crate) stream: u64,
    pub(crate) scale: f64,
    pub(crate) bits_used: u64,
    pub(crate) bits_declared: u64,
    pub(crate) words: u64,
    pub(crate) clamped_columns: Vec<usize>,
    pub(crate) rounding: Rounding,
    /// Summands per column (OSNAP), diagonals (IND-DIAG) or terms per row
    /// (LESS-IND-ROWS); zero for the entrywise kinds.
    pub(crate) count: usize,
    /// IND-DIAG: sampled diagonal offsets γ (0-based).
    pub(crate) diagonals: Vec<usize>,
}

impl SparseSketch {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn kind(&self) -> SketchKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n(&self) -> usize {
        self.matrix.cols()
    }

    /// Effective p after any rounding.
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// 1/√(pm).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Exact uniform bits consumed during construction.
    pub fn bits_used(&self) -> u64 {
        self.bits_used
    }

    /// True when the consumed-bit counter equals the declared costs.
    pub fn audit(&self) -> bool {
        self.bits_used == self.bits_declared
    }

    /// 64 bits per generator word drawn, the conservative count.
    pub fn bits_conservative(&self) -> u64 {
        64 * self.words
    }

    pub fn clamped_columns(&self) -> &[usize] {
        &self.clamped_columns
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
    }

    pub fn summand_count(&self) -> usize {
        self.count
    }

    pub fn diagonals(&self) -> &[usize] {
        &self.diagonals
    }

    /// `scale · S · A`.
    pub fn apply(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        self.matrix.mul_dense_scaled(a, self.scale)
    }

    /// Dense `scale · S`, for oracles and small experiments.
    pub fn to_scaled_dense(&self) -> DenseMatrix {
        let mut s = self.matrix.to_dense();
        s.scale_in_place(self.scale);
        s
    }

    pub fn column_nnz_stats(&self) -> NnzStats {
        NnzStats::from_counts(&self.matrix.col_nnz())
    }

    pub fn row_nnz_stats(&self) -> NnzStats {
        NnzStats::from_counts(&self.matrix.row_nnz())
    }

    /// Columns violating the OSNAP block structure: not exactly `s`
    /// nonzeros, or two nonzeros in one block, or a value other than ±1.
    pub fn osnap_violations(&self) -> usize {
        let s = self.count;
        if s == 0 || self.m() % s != 0 {
            return self.n();
        }
        let block = self.m() / s;
        let mut per_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n()];
        for (i, j, v) in self.matrix.triplets() {
            per_col[j].push((i, v));
        }
        per_col
            .iter()
            .filter(|col| {
                if col.len() != s || col.iter().any(|&(_, v)| v.abs() != 1.0) {
                    return true;
                }
                let mut blocks: Vec<usize> = col.iter().map(|&(i, _)| i / block).collect();
                blocks.sort_unstable();
                blocks.dedup();
                blocks.len() != s
            })
            .count()
    }

    /// Rows with more than `count` nonzeros (the LESS-IND-ROWS bound).
    pub fn row_bound_violations(&self) -> usize {
        self.matrix.row_nnz().iter().filter(|&&c| c > self.count).count()
    }

    /// Entries off the recorded wrapped diagonals, plus one if more than
    /// np distinct diagonals were recorded.
    pub fn diagonal_violations(&self) -> usize {
        let n = self.n();
        let mut diag = self.diagonals.clone();
        diag.sort_unstable();
        diag.dedup();
        let off = self
            .matrix
            .triplets()
            .filter(|&(i, j, _)| diag.binary_search(&((j + n - i % n) % n)).is_err())
            .count();
        off + usize::from(diag.len() > self.count)
    }
}

impl LinearSketch for SparseSketch {
    fn input_dim(&self) -> usize {
        self.n()
    }

    fn output_dim(&self) -> usize {
        self.m()
    }

    fn apply(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        SparseSketch::apply(self, a)
    }

    fn bits_used(&self) -> u64 {
        self.bits_used
    }

    fn nnz(&self) -> Option<usize> {
        Some(self.matrix.nnz())
    }
}
