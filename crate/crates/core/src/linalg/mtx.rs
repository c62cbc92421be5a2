//! Matrix Market reader and writer.
//!
//! Supports the `matrix` object in `coordinate` and `array` formats with
//! `real`, `integer` and `pattern` fields (pattern only for coordinate) and
//! `general`, `symmetric` and `skew-symmetric` symmetry. Complex and
//! Hermitian files are rejected. Errors carry 1-based line and column.

use super::csr::CsrMatrix;
use super::dense::DenseMatrix;
use crate::error::{Error, Result};
use std::path::Path;

/// Upper bound on dense entries or declared nonzeros accepted from a file.
pub const MAX_ENTRIES: usize = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtxFormat {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtxField {
    Real,
    Integer,
    Pattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtxSymmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MtxHeader {
    pub format: MtxFormat,
    pub field: MtxField,
    pub symmetry: MtxSymmetry,
}

/// A parsed file: coordinate files become sparse, array files dense.
#[derive(Debug, Clone, PartialEq)]
pub enum MtxMatrix {
    Dense(DenseMatrix),
    Sparse(CsrMatrix),
}

impl MtxMatrix {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            MtxMatrix::Dense(m) => m.shape(),
            MtxMatrix::Sparse(s) => (s.rows(), s.cols()),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            MtxMatrix::Dense(m) => m.clone(),
            MtxMatrix::Sparse(s) => s.to_dense(),
        }
    }

    pub fn into_dense(self) -> DenseMatrix {
        match self {
            MtxMatrix::Dense(m) => m,
            MtxMatrix::Sparse(s) => s.to_dense(),
        }
    }
}

/// Whitespace-separated tokens with their 1-based starting column.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (pos, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, &line[s..pos]));
            }
        } else if start.is_none() {
            start = Some(pos);
        }
    }
    if let Some(s) = start {
        out.push((s, &line[s..]));
    }
    out.into_iter().map(|(s, t)| (line[..s].chars().count() + 1, t)).collect()
}

fn parse_header(line: &str) -> Result<MtxHeader> {
    let toks = tokens(line);
    let col_of = |k: usize| toks.get(k).map_or(line.chars().count() + 1, |t| t.0);
    match toks.first() {
        Some((_, t)) if *t == "%%MatrixMarket" => {}
        _ => return Err(Error::parse(1, 1, "missing %%MatrixMarket banner")),
    }
    let word = |k: usize, what: &str| -> Result<String> {
        toks.get(k)
            .map(|t| t.1.to_ascii_lowercase())
            .ok_or_else(|| Error::parse(1, col_of(k), format!("missing {what}")))
    };
    if word(1, "object")? != "matrix" {
        return Err(Error::parse(1, col_of(1), "only the matrix object is supported"));
    }
    let format = match word(2, "format")?.as_str() {
        "coordinate" => MtxFormat::Coordinate,
        "array" => MtxFormat::Array,
        other => return Err(Error::parse(1, col_of(2), format!("unknown format '{other}'"))),
    };
    let field = match word(3, "field")?.as_str() {
        "real" | "double" => MtxField::Real,
        "integer" => MtxField::Integer,
        "pattern" => MtxField::Pattern,
        "complex" => return Err(Error::parse(1, col_of(3), "complex fields are not supported")),
        other => return Err(Error::parse(1, col_of(3), format!("unknown field '{other}'"))),
    };
    let symmetry = match word(4, "symmetry")?.as_str() {
        "general" => MtxSymmetry::General,
        "symmetric" => MtxSymmetry::Symmetric,
        "skew-symmetric" => MtxSymmetry::SkewSymmetric,
        "hermitian" => return Err(Error::parse(1, col_of(4), "hermitian symmetry is not supported")),
        other => return Err(Error::parse(1, col_of(4), format!("unknown symmetry '{other}'"))),
    };
    if toks.len() > 5 {
        return Err(Error::parse(1, col_of(5), "trailing tokens in banner"));
    }
    if format == MtxFormat::Array && field == MtxField::Pattern {
        return Err(Error::parse(1, col_of(3), "pattern field requires coordinate format"));
    }
    Ok(MtxHeader { format, field, symmetry })
}

fn parse_count(line: usize, (col, tok): (usize, &str)) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| Error::parse(line, col, format!("expected a nonnegative integer, found '{tok}'")))
}

fn parse_value(line: usize, (col, tok): (usize, &str), field: MtxField) -> Result<f64> {
    let v = match field {
        MtxField::Integer => tok
            .parse::<i64>()
            .map(|v| v as f64)
            .map_err(|_| Error::parse(line, col, format!("expected an integer, found '{tok}'")))?,
        _ => tok
            .parse::<f64>()
            .map_err(|_| Error::parse(line, col, format!("expected a real number, found '{tok}'")))?,
    };
    if !v.is_finite() {
        return Err(Error::parse(line, col, "value is not finite"));
    }
    Ok(v)
}

/// Parses Matrix Market text.
pub fn parse_matrix_market(text: &str) -> Result<MtxMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, banner) = lines.next().ok_or_else(|| Error::parse(1, 1, "empty input"))?;
    let header = parse_header(banner)?;
    // Remaining non-comment, non-blank lines.
    let mut body = lines.filter(|(_, l)| {
        let t = l.trim_start();
        !t.is_empty() && !t.starts_with('%')
    });
    let last_line = text.lines().count().max(1);

    let (size_no, size_line) = body.next().ok_or_else(|| Error::parse(last_line, 1, "missing size line"))?;
    let size = tokens(size_line);
    let want = if header.format == MtxFormat::Coordinate { 3 } else { 2 };
    if size.len() != want {
        let col = size.get(want).map_or(size_line.chars().count() + 1, |t| t.0);
        return Err(Error::parse(size_no, col, format!("size line needs {want} integers")));
    }
    let rows = parse_count(size_no, size[0])?;
    let cols = parse_count(size_no, size[1])?;
    if header.symmetry != MtxSymmetry::General && rows != cols {
        return Err(Error::parse(size_no, size[0].0, "symmetric storage requires a square matrix"));
    }

    match header.format {
        MtxFormat::Array => {
            let total = rows
                .checked_mul(cols)
                .filter(|&t| t <= MAX_ENTRIES)
                .ok_or_else(|| Error::parse(size_no, size[0].0, "matrix too large"))?;
            // Positions in column-major order that are stored explicitly.
            let positions: Box<dyn Iterator<Item = (usize, usize)>> = match header.symmetry {
                MtxSymmetry::General => Box::new((0..cols).flat_map(move |j| (0..rows).map(move |i| (i, j)))),
                MtxSymmetry::Symmetric => Box::new((0..cols).flat_map(move |j| (j..rows).map(move |i| (i, j)))),
                MtxSymmetry::SkewSymmetric => Box::new((0..cols).flat_map(move |j| (j + 1..rows).map(move |i| (i, j)))),
            };
            let mut data = vec![0.0; total];
            let mut positions = positions.peekable();
            for (no, line) in body.by_ref() {
                let toks = tokens(line);
                if toks.len() != 1 {
                    let col = toks.get(1).map_or(1, |t| t.0);
                    return Err(Error::parse(no, col, "array entries hold one value per line"));
                }
                let Some((i, j)) = positions.next() else {
                    return Err(Error::parse(no, toks[0].0, "more entries than the size line declares"));
                };
                let v = parse_value(no, toks[0], header.field)?;
                data[i * cols + j] = v;
                match header.symmetry {
                    MtxSymmetry::General => {}
                    MtxSymmetry::Symmetric => data[j * cols + i] = v,
                    MtxSymmetry::SkewSymmetric => data[j * cols + i] = -v,
                }
                if positions.peek().is_none() {
                    break;
                }
            }
            if positions.peek().is_some() {
                return Err(Error::parse(last_line, 1, "fewer entries than the size line declares"));
            }
            if let Some((no, line)) = body.next() {
                return Err(Error::parse(no, tokens(line)[0].0, "more entries than the size line declares"));
            }
            Ok(MtxMatrix::Dense(DenseMatrix::from_vec(rows, cols, data)?))
        }
        MtxFormat::Coordinate => {
            let nnz = parse_count(size_no, size[2])?;
            if nnz > MAX_ENTRIES {
                return Err(Error::parse(size_no, size[2].0, "too many entries"));
            }
            let per_entry = if header.field == MtxField::Pattern { 2 } else { 3 };
            let mut triplets = Vec::with_capacity(nnz.min(1 << 20));
            let mut seen = 0usize;
            for (no, line) in body.by_ref() {
                let toks = tokens(line);
                if toks.len() != per_entry {
                    let col = toks.get(per_entry).or(toks.last()).map_or(1, |t| t.0);
                    return Err(Error::parse(no, col, format!("expected {per_entry} tokens per entry")));
                }
                if seen == nnz {
                    return Err(Error::parse(no, toks[0].0, "more entries than the size line declares"));
                }
                let i = parse_count(no, toks[0])?;
                let j = parse_count(no, toks[1])?;
                if i == 0 || i > rows {
                    return Err(Error::parse(no, toks[0].0, format!("row index {i} outside 1..={rows}")));
                }
                if j == 0 || j > cols {
                    return Err(Error::parse(no, toks[1].0, format!("column index {j} outside 1..={cols}")));
                }
                let v = if per_entry == 3 {
                    parse_value(no, toks[2], header.field)?
                } else {
                    1.0
                };
                let (i, j) = (i - 1, j - 1);
                match header.symmetry {
                    MtxSymmetry::General => triplets.push((i, j, v)),
                    MtxSymmetry::Symmetric => {
                        if i < j {
                            return Err(Error::parse(no, toks[0].0, "symmetric storage holds the lower triangle only"));
                        }
                        triplets.push((i, j, v));
                        if i != j {
                            triplets.push((j, i, v));
                        }
                    }
                    MtxSymmetry::SkewSymmetric => {
                        if i <= j {
                            return Err(Error::parse(
                                no,
                                toks[0].0,
                                "skew-symmetric storage holds the strict lower triangle only",
                            ));
                        }
                        triplets.push((i, j, v));
                        triplets.push((j, i, -v));
                    }
                }
                seen += 1;
            }
            if seen != nnz {
                return Err(Error::parse(
                    last_line,
                    1,
                    format!("size line declares {nnz} entries, found {seen}"),
                ));
            }
            Ok(MtxMatrix::Sparse(CsrMatrix::from_triplets(rows, cols, &triplets)?))
        }
    }
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<MtxMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix_market(&text)
}

/// Reads a vector stored as an n×1 or 1×n matrix.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let m = read_matrix_market(path)?.into_dense();
    match m.shape() {
        (_, 1) | (1, _) => Ok(m.into_data()),
        (r, c) => Err(Error::BadDims(format!("expected a vector, found a {r}x{c} matrix"))),
    }
}

/// Array-format text; values use the shortest round-trip representation.
pub fn write_array(m: &DenseMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    out.push_str(&format!("{} {}\n", m.rows(), m.cols()));
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            out.push_str(&format!("{:e}\n", m[(i, j)]));
        }
    }
    out
}

/// Coordinate-format text with one line per stored entry.
pub fn write_coordinate(s: &CsrMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    out.push_str(&format!("{} {} {}\n", s.rows(), s.cols(), s.nnz()));
    for (i, j, v) in s.triplets() {
        out.push_str(&format!("{} {} {:e}\n", i + 1, j + 1, v));
    }
    out
}

pub fn write_matrix_market(path: impl AsRef<Path>, m: &MtxMatrix) -> Result<()> {
    let text = match m {
        MtxMatrix::Dense(d) => write_array(d),
        MtxMatrix::Sparse(s) => write_coordinate(s),
    };
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_round_trip() {
        let a = DenseMatrix::identity(3);
        let back = parse_matrix_market(&write_array(&a)).unwrap();
        assert_eq!(back, MtxMatrix::Dense(a));
    }

    #[test]
    fn coordinate_round_trip_keeps_nnz() {
        let s = CsrMatrix::from_triplets(4, 5, &[(0, 1, 0.1), (3, 4, -2.5e-300), (2, 0, 7.0)]).unwrap();
        let back = parse_matrix_market(&write_coordinate(&s)).unwrap();
        assert_eq!(back, MtxMatrix::Sparse(s));
    }

    #[test]
    fn symmetric_and_skew_expand() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% c\n2 2 2\n1 1 1.5\n2 1 3\n";
        let m = parse_matrix_market(text).unwrap().into_dense();
        assert_eq!(m, DenseMatrix::from_rows(&[&[1.5, 3.0], &[3.0, 0.0]]));
        let text = "%%MatrixMarket matrix array integer skew-symmetric\n2 2\n4\n";
        let m = parse_matrix_market(text).unwrap().into_dense();
        assert_eq!(m, DenseMatrix::from_rows(&[&[0.0, -4.0], &[4.0, 0.0]]));
    }

    #[test]
    fn pattern_entries_are_ones() {
        let text = "%%MatrixMarket matrix coordinate pattern general\n2 3 2\n1 3\n2 1\n";
        let m = parse_matrix_market(text).unwrap().into_dense();
        assert_eq!(m, DenseMatrix::from_rows(&[&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]));
    }

    #[test]
    fn malformed_header_names_line() {
        let err = parse_matrix_market("%%MatrixMarket matrix coordinat real general\n1 1 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, column: 23, .. }), "{err:?}");
        let err = parse_matrix_market("hello\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn bad_entry_reports_position() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n2 x 1.0\n";
        let err = parse_matrix_market(text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, column: 3, .. }), "{err:?}");
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        assert!(matches!(parse_matrix_market(text), Err(Error::Parse { line: 3, column: 1, .. })));
    }

    #[test]
    fn entry_count_mismatch() {
        let short = "%%MatrixMarket matrix array real general\n2 1\n1.0\n";
        assert!(parse_matrix_market(short).is_err());
        let long = "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1\n2 2 1\n";
        assert!(matches!(parse_matrix_market(long), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn oversized_dense_rejected_without_allocating() {
        let text = "%%MatrixMarket matrix array real general\n4000000000 4000000000\n";
        assert!(parse_matrix_market(text).is_err());
    }
}
