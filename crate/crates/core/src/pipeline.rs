//! Embedding pipelines: distortion reports, the staged fast embedding and
//! its low-randomness variant, the two-pass low-distortion embedding and the
//! regression reduction.

use crate::calibration;
use crate::error::{Error, Result};
use crate::leverage::{fast_scores, probe_count, LeverageScoreSet};
use crate::linalg::{qr_factor, singular_values, upper_triangular_inverse, DenseMatrix, NnzStats};
use crate::randbits::{ceil_log2, BitSource};
use crate::sketch::{build_from, LinearSketch, Rounding, SketchKind, SketchParams, SparseSketch};
use crate::transform::{RhtOperator, FJLT_BETA1};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Wall-clock fields, kept apart so reproducibility checks can drop them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage_ms: Vec<f64>,
}

/// Singular-value summary of a scaled sketch applied to an orthonormal basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub schema: u32,
    pub smin: f64,
    pub smax: f64,
    /// `smax / smin`; infinite (serialized as null) when smin is 0.
    pub kappa: Option<f64>,
    /// Smallest ε with `(1+ε)⁻¹ ≤ smin ≤ smax ≤ 1+ε`.
    pub eps_hat: Option<f64>,
    pub nnz: Option<usize>,
    pub bits_used: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub row_nnz: Option<NnzStats>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub col_nnz: Option<NnzStats>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub stages: Vec<String>,
    pub timing: Timing,
}

impl EmbeddingReport {
    /// Builds the report from `S·U` for an orthonormal `U`.
    pub fn from_product(su: &DenseMatrix, nnz: Option<usize>, bits_used: u64) -> Self {
        let sv = singular_values(su);
        let smin = sv.min().unwrap_or(0.0);
        let smax = sv.max().unwrap_or(0.0);
        let finite = |x: f64| if x.is_finite() { Some(x) } else { None };
        Self {
            schema: 1,
            smin,
            smax,
            kappa: finite(smax / smin),
            eps_hat: finite((smax - 1.0).max(1.0 / smin - 1.0)),
            nnz,
            bits_used,
            row_nnz: None,
            col_nnz: None,
            stages: Vec::new(),
            timing: Timing::default(),
        }
    }

    pub fn kappa_value(&self) -> f64 {
        self.kappa.unwrap_or(f64::INFINITY)
    }

    pub fn eps_value(&self) -> f64 {
        self.eps_hat.unwrap_or(f64::INFINITY)
    }

    /// `1−ε ≤ smin` and `smax ≤ 1+ε`.
    pub fn within(&self, eps: f64) -> bool {
        self.smin >= 1.0 - eps && self.smax <= 1.0 + eps
    }

    /// JSON with the `timing` block removed, for reproducibility diffs.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: Timing::default(),
            ..self.clone()
        }
    }
}

/// Applies `op` to an orthonormal `u` and reports its singular values.
pub fn embed_and_report(op: &dyn LinearSketch, u: &DenseMatrix) -> Result<EmbeddingReport> {
    let start = Instant::now();
    let su = op.apply(u)?;
    let mut report = EmbeddingReport::from_product(&su, op.nnz(), op.bits_used());
    report.timing.stage_ms.push(start.elapsed().as_secs_f64() * 1e3);
    Ok(report)
}

/// Report for a sparse sketch, including its row and column sparsity.
pub fn sketch_report(s: &SparseSketch, u: &DenseMatrix) -> Result<EmbeddingReport> {
    let mut r = embed_and_report(s, u)?;
    r.row_nnz = Some(s.row_nnz_stats());
    r.col_nnz = Some(s.column_nnz_stats());
    Ok(r)
}

/// `⌈c·log₂⁴(d/δ)⌉`, optionally rounded up to a power of two, capped at m.
pub fn pm_target(c: f64, d: usize, delta: f64, m: usize, power_of_two: bool) -> usize {
    let raw = (c * (d as f64 / delta).log2().max(1.0).powi(4)).ceil().max(1.0) as usize;
    let pm = if power_of_two { raw.next_power_of_two() } else { raw };
    pm.min(m).max(1)
}

/// Problem sizes and knobs for the embedding pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSpec {
    pub n: usize,
    pub d: usize,
    pub eps: f64,
    pub delta: f64,
    pub theta: f64,
    pub gamma: f64,
    pub m1: Option<usize>,
    pub m2: Option<usize>,
    pub m3: Option<usize>,
    pub stage1_factor: f64,
    pub stage2_factor: f64,
    pub pm_factor: f64,
    /// Final stage of the standard chain (a LESS kind).
    pub stage3_kind: SketchKind,
    /// LESS kind used by the low-distortion embedding.
    pub less_kind: SketchKind,
    pub lowdist_m_factor: f64,
    pub lowdist_terms: usize,
    /// Probe count for fast scores; ⌈1/γ⌉ when absent.
    pub probes: Option<usize>,
}

impl EmbeddingSpec {
    pub fn new(n: usize, d: usize) -> Self {
        let c = calibration::defaults();
        Self {
            n,
            d,
            eps: 0.5,
            delta: 0.1,
            theta: c.chain_theta,
            gamma: 0.25,
            m1: None,
            m2: None,
            m3: None,
            stage1_factor: c.chain_stage1_factor,
            stage2_factor: c.chain_stage2_factor,
            pm_factor: c.chain_pm_factor,
            stage3_kind: SketchKind::LessIndRows,
            less_kind: SketchKind::LessIndRows,
            lowdist_m_factor: c.lowdist_m_factor,
            lowdist_terms: c.lowdist_terms,
            probes: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let open = |x: f64| x > 0.0 && x < 1.0;
        if self.d == 0 || self.n < self.d {
            return Err(Error::BadDims(format!("need n >= d >= 1, got n={}, d={}", self.n, self.d)));
        }
        if !open(self.eps) || !open(self.delta) {
            return Err(Error::BadParams(format!(
                "eps = {} and delta = {} must lie in (0, 1)",
                self.eps, self.delta
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::BadParams(format!("gamma = {} must lie in (0, 1]", self.gamma)));
        }
        if !(self.theta > 0.0) || !(self.stage1_factor > 0.0) || !(self.stage2_factor > 0.0) || !(self.pm_factor > 0.0) {
            return Err(Error::BadParams("theta and stage factors must be positive".into()));
        }
        Ok(())
    }

    /// Resolves stage dimensions and sparsities.
    ///
    /// Defaults: m₁ = c₁⌈d^{1+γ}log₂d⌉, m₂ = c₂⌈d log₂d⌉ and m₃ = ⌈(1+θ)d⌉; m₁
    /// and m₂ are rounded up to powers of two and raised so that
    /// m₃ ≤ m₂ ≤ m₁. Explicit dimensions that break d ≤ m₃ ≤ m₂ ≤ m₁ fail.
    pub fn resolve(&self) -> Result<StageDims> {
        self.validate()?;
        let d = self.d as f64;
        let log_d = d.log2().max(1.0);
        let m3 = self.m3.unwrap_or(((1.0 + self.theta) * d).ceil() as usize);
        let m2 = match self.m2 {
            Some(m) => m.next_power_of_two(),
            None => ((self.stage2_factor * (d * log_d).ceil()).ceil() as usize)
                .next_power_of_two()
                .max(m3.next_power_of_two()),
        };
        let m1 = match self.m1 {
            Some(m) => m.next_power_of_two(),
            None => ((self.stage1_factor * (d.powf(1.0 + self.gamma) * log_d).ceil()).ceil() as usize)
                .next_power_of_two()
                .max(m2),
        };
        if !(self.d <= m3 && m3 <= m2 && m2 <= m1) {
            return Err(Error::StageDimsInconsistent(format!(
                "need d <= m3 <= m2 <= m1, got d={}, m3={m3}, m2={m2}, m1={m1}",
                self.d
            )));
        }
        let s1 = probe_count(self.gamma).next_power_of_two().min(m1);
        let s2 = (ceil_log2(self.d as u64).max(1) as usize).next_power_of_two().min(m2);
        let pm3 = pm_target(self.pm_factor, self.d, self.delta, m3, false);
        Ok(StageDims { m1, m2, m3, s1, s2, pm3 })
    }

    pub fn probe_count(&self) -> usize {
        self.probes.unwrap_or_else(|| probe_count(self.gamma))
    }
}

/// Resolved stage dimensions and per-column sparsities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageDims {
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
    pub s1: usize,
    pub s2: usize,
    pub pm3: usize,
}

/// One stage of a composed embedding.
pub struct Stage {
    pub name: String,
    pub op: Box<dyn LinearSketch>,
}

/// A composition of stages applied right to left, built from (spec, seed)
/// before any data is seen.
pub struct OseChain {
    input_dim: usize,
    stages: Vec<Stage>,
    dims: StageDims,
}

impl OseChain {
    /// OSNAP → OSNAP → RHT → LESS with uniform scores.
    pub fn new(spec: &EmbeddingSpec, seed: u64) -> Result<Self> {
        Self::from_source(spec, &BitSource::new(seed), false)
    }

    /// Hashed OSNAP → hashed OSNAP → RHT → IND-DIAG.
    pub fn lowbits(spec: &EmbeddingSpec, seed: u64) -> Result<Self> {
        Self::from_source(spec, &BitSource::new(seed), true)
    }

    /// Builds the chain from child streams of `root`.
    pub fn from_source(spec: &EmbeddingSpec, root: &BitSource, lowbits: bool) -> Result<Self> {
        let dims = spec.resolve()?;
        let seed = root.seed();
        let mut stages = Vec::new();
        let mut current = spec.n;
        let independence = 2 * ceil_log2(spec.d as u64).max(1) as usize;
        for (idx, (m, s)) in [(dims.m1, dims.s1), (dims.m2, dims.s2)].into_iter().enumerate() {
            if m >= current {
                continue;
            }
            let kind = if lowbits {
                SketchKind::OsnapHashed
            } else {
                SketchKind::OsnapIndCol
            };
            let params = SketchParams::new(kind, m, current, s as f64 / m as f64, seed)
                .with_rounding(Rounding::Up)
                .with_independence(independence);
            let op = build_from(&params, &root.derive(idx as u64 + 1))?;
            stages.push(Stage {
                name: format!("{kind}[{m}x{current}]"),
                op: Box::new(op),
            });
            current = m;
        }
        let rht = RhtOperator::new(current, &mut root.derive(3))?;
        let padded = rht.n();
        stages.push(Stage {
            name: format!("rht[{padded}x{current}]"),
            op: Box::new(rht),
        });
        current = padded;
        let p3 = dims.pm3 as f64 / dims.m3 as f64;
        let params = if lowbits {
            SketchParams::new(SketchKind::IndDiag, dims.m3, current, p3, seed).with_rounding(Rounding::Up)
        } else {
            if !spec.stage3_kind.needs_scores() {
                return Err(Error::BadParams(format!("stage 3 must be a LESS kind, got {}", spec.stage3_kind)));
            }
            let scores = LeverageScoreSet::uniform(current, spec.d, FJLT_BETA1, 1.0)?;
            SketchParams::new(spec.stage3_kind, dims.m3, current, p3, seed)
                .with_scores(scores)
                .with_rounding(Rounding::Up)
        };
        let s3 = build_from(&params, &root.derive(4))?;
        stages.push(Stage {
            name: format!("{}[{}x{current}]", params.kind, dims.m3),
            op: Box::new(s3),
        });
        Ok(Self {
            input_dim: spec.n,
            stages,
            dims,
        })
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn dims(&self) -> StageDims {
        self.dims
    }

    /// Applies every stage, returning per-stage wall clock in milliseconds.
    pub fn apply_timed(&self, a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
        crate::sketch::check_input(self, a)?;
        let mut cur = a.clone();
        let mut ms = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let t = Instant::now();
            cur = stage.op.apply(&cur)?;
            ms.push(t.elapsed().as_secs_f64() * 1e3);
        }
        Ok((cur, ms))
    }

    /// Report of the chain on an orthonormal `u`, with per-stage timing.
    pub fn report(&self, u: &DenseMatrix) -> Result<EmbeddingReport> {
        let (su, ms) = self.apply_timed(u)?;
        Ok(self.finish_report(&su, ms))
    }

    fn finish_report(&self, su: &DenseMatrix, ms: Vec<f64>) -> EmbeddingReport {
        let mut r = EmbeddingReport::from_product(su, self.nnz(), self.bits_used());
        r.stages = self.stages.iter().map(|s| s.name.clone()).collect();
        r.timing.stage_ms = ms;
        r
    }
}

impl LinearSketch for OseChain {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.stages.last().map_or(self.input_dim, |s| s.op.output_dim())
    }

    fn apply(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.apply_timed(a)?.0)
    }

    fn bits_used(&self) -> u64 {
        self.stages.iter().map(|s| s.op.bits_used()).sum()
    }

    fn nnz(&self) -> Option<usize> {
        Some(self.stages.iter().filter_map(|s| s.op.nnz()).sum())
    }
}

/// `S·A` and its report against the column span of A (via `S·A·T⁻¹`).
fn chain_on(chain: &OseChain, a: &DenseMatrix) -> Result<(DenseMatrix, EmbeddingReport)> {
    let (_, t) = qr_factor(a)?;
    let (sa, ms) = chain.apply_timed(a)?;
    let su = sa.matmul(&upper_triangular_inverse(&t)?)?;
    Ok((sa, chain.finish_report(&su, ms)))
}

/// The four-stage constant-distortion embedding of A.
pub fn fast_ose_chain(a: &DenseMatrix, spec: &EmbeddingSpec, seed: u64) -> Result<(DenseMatrix, EmbeddingReport, OseChain)> {
    check_spec_shape(a, spec)?;
    let chain = OseChain::new(spec, seed)?;
    let (sa, r) = chain_on(&chain, a)?;
    Ok((sa, r, chain))
}

/// The same embedding built from polylogarithmically many random bits.
pub fn fast_ose_lowbits(a: &DenseMatrix, spec: &EmbeddingSpec, seed: u64) -> Result<(DenseMatrix, EmbeddingReport, OseChain)> {
    check_spec_shape(a, spec)?;
    let chain = OseChain::lowbits(spec, seed)?;
    let (sa, r) = chain_on(&chain, a)?;
    Ok((sa, r, chain))
}

fn check_spec_shape(a: &DenseMatrix, spec: &EmbeddingSpec) -> Result<()> {
    if a.shape() != (spec.n, spec.d) {
        return Err(Error::DimMismatch(format!(
            "matrix is {}x{} but the EmbeddingSpec is {}x{}",
            a.rows(),
            a.cols(),
            spec.n,
            spec.d
        )));
    }
    Ok(())
}

/// Result of the two-pass low-distortion embedding.
pub struct LowDistortion {
    pub sketch: SparseSketch,
    pub sa: DenseMatrix,
    pub report: EmbeddingReport,
    /// `R = T⁻¹` from the QR factorization of the first-pass sketch.
    pub r: DenseMatrix,
    pub scores: LeverageScoreSet,
    /// Report of the first-pass (constant-distortion) sketch.
    pub first_pass: EmbeddingReport,
}

/// Rows of the final sketch: ⌈c·d/ε²⌉ capped at n.
pub fn lowdist_rows(spec: &EmbeddingSpec, d: usize, n: usize) -> usize {
    ((spec.lowdist_m_factor * d as f64 / (spec.eps * spec.eps)).ceil() as usize).min(n)
}

/// Two passes over A: a constant-distortion sketch yields a preconditioner
/// R, Gaussian probes of A·R estimate the leverage scores, and a LESS
/// sketch with those scores gives the final embedding. Each step draws from
/// its own stream.
pub fn fast_low_distortion(a: &DenseMatrix, spec: &EmbeddingSpec, seed: u64) -> Result<LowDistortion> {
    let (n, d) = a.shape();
    let mut inner = spec.clone();
    inner.n = n;
    inner.d = d;
    let root = BitSource::new(seed);
    let t0 = Instant::now();
    let chain = OseChain::from_source(&inner, &root.derive(1), false)?;
    let (q_a, t_a) = qr_factor(a)?;
    let s1a = chain.apply(a)?;
    let first_pass = EmbeddingReport::from_product(&s1a.matmul(&upper_triangular_inverse(&t_a)?)?, chain.nnz(), chain.bits_used());
    let ms1 = t0.elapsed().as_secs_f64() * 1e3;

    let t1 = Instant::now();
    let (_, t) = qr_factor(&s1a)?;
    let r = upper_triangular_inverse(&t)?;
    let ms2 = t1.elapsed().as_secs_f64() * 1e3;

    let t2 = Instant::now();
    let mut probe_src = root.derive(2);
    let scores = fast_scores(a, &r, inner.probe_count(), &mut probe_src)?;
    let ms3 = t2.elapsed().as_secs_f64() * 1e3;

    let t3 = Instant::now();
    let m = lowdist_rows(&inner, d, n);
    let beta1 = (n as f64).powf(inner.gamma).ceil();
    let scores = scores.with_betas(beta1, 1.0)?;
    let p = (inner.lowdist_terms as f64 / (beta1 * scores.sum())).min(1.0);
    let params = SketchParams::new(inner.less_kind, m, n, p, seed)
        .with_scores(scores.clone())
        .with_rounding(Rounding::Up);
    let sketch = build_from(&params, &root.derive(3))?;
    let sa = sketch.apply(a)?;
    let ms4 = t3.elapsed().as_secs_f64() * 1e3;

    let su = sketch.apply(&q_a)?;
    let mut report = EmbeddingReport::from_product(
        &su,
        Some(sketch.matrix().nnz() + chain.nnz().unwrap_or(0)),
        chain.bits_used() + probe_src.bits_consumed() + sketch.bits_used(),
    );
    report.row_nnz = Some(sketch.row_nnz_stats());
    report.col_nnz = Some(sketch.column_nnz_stats());
    report.stages = vec![
        "constant-distortion".into(),
        "qr".into(),
        "fast-scores".into(),
        format!("{}[{m}x{n}]", inner.less_kind),
    ];
    report.timing.stage_ms = vec![ms1, ms2, ms3, ms4];
    Ok(LowDistortion {
        sketch,
        sa,
        report,
        r,
        scores,
        first_pass,
    })
}

/// `[Ã | b̃] = S[A | b]` with S a low-distortion embedding of span[A | b].
pub fn reduce_regression(a: &DenseMatrix, b: &[f64], spec: &EmbeddingSpec, seed: u64) -> Result<(DenseMatrix, Vec<f64>, EmbeddingReport)> {
    let ab = a.hstack_column(b)?;
    let out = fast_low_distortion(&ab, spec, seed)?;
    let d = a.cols();
    let a_red = out.sa.leading_columns(d);
    let b_red = out.sa.column(d);
    Ok((a_red, b_red, out.report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthonormal;
    use crate::sketch::Identity;

    #[test]
    fn identity_report() {
        let u = random_orthonormal(20, 4, 1).unwrap();
        let r = embed_and_report(&Identity(20), &u).unwrap();
        assert!((r.smin - 1.0).abs() < 1e-10 && (r.smax - 1.0).abs() < 1e-10);
        assert!((r.kappa_value() - 1.0).abs() < 1e-10);
        assert!(r.eps_value() < 1e-9);
    }

    #[test]
    fn resolve_orders_dims() {
        let dims = EmbeddingSpec::new(8192, 16).resolve().unwrap();
        assert!(16 <= dims.m3 && dims.m3 <= dims.m2 && dims.m2 <= dims.m1);
        assert!(dims.m2.is_power_of_two());
        let mut bad = EmbeddingSpec::new(8192, 16);
        bad.m3 = Some(4096);
        bad.m2 = Some(64);
        assert!(matches!(bad.resolve(), Err(Error::StageDimsInconsistent(_))));
    }

    #[test]
    fn chain_zero_in_zero_out_and_oblivious() {
        let spec = EmbeddingSpec::new(2048, 4);
        let chain = OseChain::new(&spec, 3).unwrap();
        let z = chain.apply(&DenseMatrix::zeros(2048, 4)).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        let u = random_orthonormal(2048, 4, 1).unwrap();
        let again = OseChain::new(&spec, 3).unwrap();
        assert_eq!(chain.apply(&u).unwrap(), again.apply(&u).unwrap());
    }

    #[test]
    fn pm_target_caps() {
        assert_eq!(pm_target(0.02, 16, 0.1, 256, true), 64);
        assert_eq!(pm_target(0.02, 16, 0.1, 32, true), 32);
    }
}
