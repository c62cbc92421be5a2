//! Constructors for the sketch distributions.
//!
//! Every independent unit (a column, a diagonal summand or a row) draws from
//! its own child stream `root.derive(unit)`, so the result does not depend
//! on how the work is split across threads.

use super::{Rounding, SketchKind, SketchParams, SparseSketch};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::randbits::{ceil_log2, BitSource, CategoricalTable};
use rayon::prelude::*;

/// Work size (entries touched) above which construction runs in parallel.
const PAR_THRESHOLD: usize = 1 << 15;

type Entries = Vec<(usize, f64)>;

struct Units<T> {
    lists: Vec<T>,
    consumed: u64,
    declared: u64,
    words: u64,
}

/// Runs `f` once per unit on its own child stream and sums the accounting.
fn per_unit<T, F>(units: usize, work: usize, root: &BitSource, f: F) -> Result<Units<T>>
where
    T: Send,
    F: Fn(usize, &mut BitSource) -> Result<T> + Sync,
{
    let one = |u: usize| -> Result<(T, u64, u64, u64)> {
        let mut child = root.derive(u as u64);
        let list = f(u, &mut child)?;
        Ok((list, child.bits_consumed(), child.bits_declared(), child.words_generated()))
    };
    let results: Vec<Result<(T, u64, u64, u64)>> = if work >= PAR_THRESHOLD {
        (0..units).into_par_iter().map(one).collect()
    } else {
        (0..units).map(one).collect()
    };
    let mut out = Units {
        lists: Vec::with_capacity(units),
        consumed: 0,
        declared: 0,
        words: 0,
    };
    for r in results {
        let (list, c, d, w) = r?;
        out.lists.push(list);
        out.consumed += c;
        out.declared += d;
        out.words += w;
    }
    Ok(out)
}

impl<T> Units<T> {
    fn accounting(&self) -> (u64, u64, u64) {
        (self.consumed, self.declared, self.words)
    }
}

/// Rows from per-column `(row, value)` lists.
fn transpose_lists(m: usize, cols: &[Entries]) -> Vec<Entries> {
    let mut rows: Vec<Entries> = vec![Vec::new(); m];
    for (j, col) in cols.iter().enumerate() {
        for &(i, v) in col {
            rows[i].push((j, v));
        }
    }
    rows
}

fn near_integer(x: f64) -> Option<usize> {
    let r = x.round();
    if r >= 1.0 && (x - r).abs() <= 1e-9 * r {
        Some(r as usize)
    } else {
        None
    }
}

fn summand_count(x: f64, what: &'static str, rounding: Rounding) -> Result<usize> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::BadParams(format!("{what} = {x} must be positive")));
    }
    match (near_integer(x), rounding) {
        (Some(c), _) => Ok(c),
        (None, Rounding::Up) => Ok(x.ceil().max(1.0) as usize),
        (None, Rounding::Reject) => Err(Error::NonIntegerCount { what, value: x }),
    }
}

fn check_common(params: &SketchParams) -> Result<()> {
    if params.m == 0 || params.n == 0 {
        return Err(Error::BadDims(format!(
            "sketch dims must be positive, got {}x{}",
            params.m, params.n
        )));
    }
    if !(params.p > 0.0 && params.p <= 1.0) {
        return Err(Error::BadParams(format!("p = {} must lie in (0, 1]", params.p)));
    }
    Ok(())
}

fn scores_for(params: &SketchParams) -> Result<&crate::leverage::LeverageScoreSet> {
    let scores = params.scores.as_ref().ok_or(Error::ScoresMissing(params.kind.name()))?;
    if scores.len() != params.n {
        return Err(Error::DimMismatch(format!("{} scores for n = {}", scores.len(), params.n)));
    }
    Ok(scores)
}

/// Draws a sketch from the stream keyed by `params.seed`.
pub fn build(params: &SketchParams) -> Result<SparseSketch> {
    build_from(params, &BitSource::new(params.seed))
}

/// Draws a sketch using children of `root`; `params.seed` is recorded only.
pub fn build_from(params: &SketchParams, root: &BitSource) -> Result<SparseSketch> {
    check_common(params)?;
    let (m, n, p) = (params.m, params.n, params.p);
    let mut clamped = Vec::new();
    let mut diagonals = Vec::new();
    let (rows, units, p_eff, count) = match params.kind {
        SketchKind::IidEnt => {
            let u = per_unit(n, m * n, root, |_, src| {
                let mut col = Vec::new();
                for i in 0..m {
                    if src.bernoulli(p) {
                        col.push((i, src.sign()));
                    }
                }
                Ok(col)
            })?;
            (transpose_lists(m, &u.lists), u.accounting(), p, 0)
        }
        SketchKind::OsnapIndCol => {
            let s = osnap_blocks(m, p, params.rounding)?;
            let block = m / s;
            let u = per_unit(n, n * s, root, |_, src| {
                Ok((0..s)
                    .map(|b| (b * block + src.uniform_index(block as u64) as usize, src.sign()))
                    .collect())
            })?;
            (transpose_lists(m, &u.lists), u.accounting(), s as f64 / m as f64, s)
        }
        SketchKind::IndDiag => {
            let np = summand_count(n as f64 * p, "np", params.rounding)?;
            let u = per_unit(np, np * m, root, |_, src| {
                let gamma = src.uniform_index(n as u64) as usize;
                Ok((gamma, src.pairwise_signs(m).signs()))
            })?;
            // Summand l puts W_l(i) at (i, (γ_l + i) mod n).
            let mut rows: Vec<Entries> = vec![Vec::new(); m];
            for (gamma, signs) in &u.lists {
                diagonals.push(*gamma);
                for (i, &v) in signs.iter().enumerate() {
                    rows[i].push(((gamma + i) % n, v));
                }
            }
            (rows, u.accounting(), np as f64 / n as f64, np)
        }
        SketchKind::LessIndEnt => {
            let scores = scores_for(params)?;
            let beta1 = scores.beta1();
            let mut probs = Vec::with_capacity(n);
            for (j, &l) in scores.scores().iter().enumerate() {
                let q = beta1 * l * p;
                if q > 1.0 {
                    if !params.clamp {
                        return Err(Error::ProbabilityOverflow { column: j, prob: q });
                    }
                    clamped.push(j);
                }
                probs.push(q.min(1.0));
            }
            let u = per_unit(n, m * n, root, |j, src| {
                let l = scores.scores()[j];
                if l == 0.0 {
                    return Ok(Vec::new());
                }
                let mag = 1.0 / (beta1 * l).sqrt();
                let mut col = Vec::new();
                for i in 0..m {
                    if src.bernoulli(probs[j]) {
                        col.push((i, mag * src.sign()));
                    }
                }
                Ok(col)
            })?;
            (transpose_lists(m, &u.lists), u.accounting(), p, 0)
        }
        SketchKind::LessIndRows => {
            let scores = scores_for(params)?;
            let beta1 = scores.beta1();
            let total = beta1 * scores.sum();
            let k = summand_count(total * p, "beta1*p*sum(l)", params.rounding)?;
            let table = CategoricalTable::new(scores.scores())?;
            let l = scores.scores();
            let u = per_unit(m, m * k, root, |_, src| {
                Ok((0..k)
                    .map(|_| {
                        let g = table.sample(src).expect("table has a positive weight");
                        (g, src.sign() / (beta1 * l[g]).sqrt())
                    })
                    .collect())
            })?;
            let acct = u.accounting();
            (u.lists, acct, k as f64 / total, k)
        }
        SketchKind::OsnapHashed => return build_osnap_hashed(params, root),
    };
    let matrix = CsrMatrix::from_row_lists(m, n, rows);
    Ok(SparseSketch {
        matrix,
        kind: params.kind,
        p: p_eff,
        seed: params.seed,
        stream: root.stream(),
        scale: 1.0 / (p_eff * m as f64).sqrt(),
        bits_used: units.0,
        bits_declared: units.1,
        words: units.2,
        clamped_columns: clamped,
        rounding: params.rounding,
        count,
        diagonals,
    })
}

/// Number of OSNAP blocks s = pm, which must divide m. Under
/// `Rounding::Up` the smallest divisor of m not below pm is used.
fn osnap_blocks(m: usize, p: f64, rounding: Rounding) -> Result<usize> {
    let pm = p * m as f64;
    let s = summand_count(pm, "pm", rounding)?;
    if m % s == 0 {
        return Ok(s);
    }
    match rounding {
        Rounding::Reject => Err(Error::DivisibilityViolated { m, pm }),
        Rounding::Up => Ok((s..=m).find(|c| m % c == 0).unwrap_or(m)),
    }
}

/// OSNAP with s blocks whose positions and signs come from s independent
/// k-wise independent polynomial hashes over GF(2^w), k =
/// `params.independence`. Costs s·k·w bits regardless of n; requires m/s to
/// be a power of two.
pub fn build_osnap_hashed(params: &SketchParams, root: &BitSource) -> Result<SparseSketch> {
    check_common(params)?;
    let (m, n) = (params.m, params.n);
    let s = osnap_blocks(m, params.p, params.rounding)?;
    let block = m / s;
    if !block.is_power_of_two() {
        return Err(Error::BadParams(format!("hashed OSNAP needs m/s a power of two, got {block}")));
    }
    if params.independence == 0 {
        return Err(Error::BadParams("hash independence must be >= 1".into()));
    }
    let bw = block.trailing_zeros();
    let width = ceil_log2(n as u64).max(bw + 1).max(1);
    if width > 32 {
        return Err(Error::BadParams(format!("hash width {width} exceeds 32 bits")));
    }
    let mut src = root.derive(0);
    let hashes: Vec<_> = (0..s).map(|_| src.kwise_hash(params.independence, width)).collect();
    let mask = (block - 1) as u64;
    let cols: Vec<Entries> = (0..n)
        .map(|j| {
            hashes
                .iter()
                .enumerate()
                .map(|(b, h)| {
                    let v = h.eval(j as u64);
                    let sign = if (v >> bw) & 1 == 1 { -1.0 } else { 1.0 };
                    (b * block + (v & mask) as usize, sign)
                })
                .collect()
        })
        .collect();
    let matrix = CsrMatrix::from_row_lists(m, n, transpose_lists(m, &cols));
    let p_eff = s as f64 / m as f64;
    Ok(SparseSketch {
        matrix,
        kind: SketchKind::OsnapHashed,
        p: p_eff,
        seed: params.seed,
        stream: root.stream(),
        scale: 1.0 / (p_eff * m as f64).sqrt(),
        bits_used: src.bits_consumed(),
        bits_declared: src.bits_declared(),
        words: src.words_generated(),
        clamped_columns: Vec::new(),
        rounding: params.rounding,
        count: s,
        diagonals: Vec::new(),
    })
}

/// An a×b matrix with a single ±1 at a uniformly random position.
pub fn build_one_hot(a: usize, b: usize, src: &mut BitSource) -> CsrMatrix {
    assert!(a >= 1 && b >= 1, "one-hot needs a, b >= 1");
    let idx = src.uniform_index((a * b) as u64) as usize;
    let sign = src.sign();
    CsrMatrix::from_row_lists(
        a,
        b,
        (0..a)
            .map(|i| if i == idx / b { vec![(idx % b, sign)] } else { Vec::new() })
            .collect(),
    )
}
