//! Matrix Market plus JSON sidecar persistence for sparse sketches.

use super::{Rounding, SketchKind, SparseSketch};
use crate::error::{Error, Result};
use crate::linalg::mtx::{parse_matrix_market, write_coordinate, MtxMatrix};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Metadata stored next to the coordinate file of a sketch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SketchSidecar {
    pub schema: u32,
    pub kind: SketchKind,
    pub m: usize,
    pub n: usize,
    pub p: f64,
    pub seed: u64,
    pub stream: u64,
    pub scale: f64,
    pub bits_used: u64,
    pub bits_conservative: u64,
    pub clamped_columns: Vec<usize>,
    pub rounding: Rounding,
    pub summands: usize,
    pub diagonals: Vec<usize>,
}

impl SketchSidecar {
    pub fn of(s: &SparseSketch) -> Self {
        Self {
            schema: 1,
            kind: s.kind,
            m: s.m(),
            n: s.n(),
            p: s.p,
            seed: s.seed,
            stream: s.stream,
            scale: s.scale,
            bits_used: s.bits_used,
            bits_conservative: s.bits_conservative(),
            clamped_columns: s.clamped_columns.clone(),
            rounding: s.rounding,
            summands: s.count,
            diagonals: s.diagonals.clone(),
        }
    }

    /// Parses and validates sidecar JSON.
    pub fn parse(text: &str) -> Result<Self> {
        let car: SketchSidecar = serde_json::from_str(text)?;
        if car.schema != 1 {
            return Err(Error::Config(format!("unsupported sidecar schema {}", car.schema)));
        }
        if car.m == 0 || car.n == 0 {
            return Err(Error::BadDims(format!("sketch dims {}x{}", car.m, car.n)));
        }
        if !(car.p > 0.0 && car.p <= 1.0) {
            return Err(Error::BadParams(format!("p = {} outside (0, 1]", car.p)));
        }
        let expected = 1.0 / (car.p * car.m as f64).sqrt();
        if !(car.scale.is_finite() && (car.scale - expected).abs() <= 1e-12 * expected) {
            return Err(Error::BadParams(format!("scale {} is not 1/sqrt(pm) = {expected}", car.scale)));
        }
        if car.clamped_columns.iter().chain(&car.diagonals).any(|&j| j >= car.n) {
            return Err(Error::BadDims("column index in sidecar outside 0..n".into()));
        }
        if car.bits_conservative % 64 != 0 {
            return Err(Error::BadParams("conservative bit count must be a multiple of 64".into()));
        }
        Ok(car)
    }
}

/// Rebuilds a sketch from coordinate text and sidecar JSON.
pub fn sketch_from_parts(mtx: &str, sidecar: &str) -> Result<SparseSketch> {
    let car = SketchSidecar::parse(sidecar)?;
    let matrix = match parse_matrix_market(mtx)? {
        MtxMatrix::Sparse(s) => s,
        MtxMatrix::Dense(_) => return Err(Error::BadParams("sketch files use the coordinate format".into())),
    };
    if (matrix.rows(), matrix.cols()) != (car.m, car.n) {
        return Err(Error::DimMismatch(format!(
            "matrix is {}x{} but the sidecar says {}x{}",
            matrix.rows(),
            matrix.cols(),
            car.m,
            car.n
        )));
    }
    Ok(SparseSketch {
        matrix,
        kind: car.kind,
        p: car.p,
        seed: car.seed,
        stream: car.stream,
        scale: car.scale,
        bits_used: car.bits_used,
        bits_declared: car.bits_used,
        words: car.bits_conservative / 64,
        clamped_columns: car.clamped_columns,
        rounding: car.rounding,
        count: car.summands,
        diagonals: car.diagonals,
    })
}

pub fn save_sketch(s: &SparseSketch, mtx: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<()> {
    std::fs::write(mtx, write_coordinate(&s.matrix))?;
    std::fs::write(sidecar, serde_json::to_string_pretty(&SketchSidecar::of(s))?)?;
    Ok(())
}

pub fn load_sketch(mtx: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<SparseSketch> {
    sketch_from_parts(&std::fs::read_to_string(mtx)?, &std::fs::read_to_string(sidecar)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::{build, SketchParams};

    #[test]
    fn round_trip_through_text() {
        let s = build(&SketchParams::new(SketchKind::IndDiag, 8, 32, 0.125, 5)).unwrap();
        let mtx = write_coordinate(s.matrix());
        let car = serde_json::to_string(&SketchSidecar::of(&s)).unwrap();
        let back = sketch_from_parts(&mtx, &car).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn inconsistent_sidecar_rejected() {
        let s = build(&SketchParams::new(SketchKind::IidEnt, 4, 6, 0.5, 1)).unwrap();
        let mtx = write_coordinate(s.matrix());
        let mut car = SketchSidecar::of(&s);
        car.m = 5;
        car.scale = 1.0 / (0.5f64 * 5.0).sqrt();
        assert!(sketch_from_parts(&mtx, &serde_json::to_string(&car).unwrap()).is_err());
        let mut car = SketchSidecar::of(&s);
        car.scale *= 2.0;
        assert!(SketchSidecar::parse(&serde_json::to_string(&car).unwrap()).is_err());
        assert!(SketchSidecar::parse("{\"schema\": 1, \"extra\": 0}").is_err());
    }
}
