//! Spectral verification: augmented symmetrizations, the matched Gaussian
//! model, covariance parameters, universality statistics, singular-value
//! bounds and entrywise moment audits.

use crate::calibration;
use crate::error::{Error, Result};
use crate::leverage::orthonormal_scores;
use crate::linalg::{
    hausdorff_distance, random_orthonormal, singular_values, spiked_orthonormal, symmetric_eigenvalues, DenseMatrix, SpectrumSet,
};
use crate::randbits::BitSource;
use crate::sketch::{build_from, Rounding, SketchKind, SketchParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest `m + d` handled by the dense eigensolver paths.
pub const MAX_AUGSYM_DIM: usize = 600;

/// `augsym(Y, λ)` of size 2(m+d), laid out in blocks of sizes d, m, m, d:
/// Yᵀ at (1,3), Y at (3,1) and `aug^{1/2}` at (1,4) and (4,1).
#[derive(Debug, Clone, PartialEq)]
pub struct AugSym {
    matrix: DenseMatrix,
    m: usize,
    d: usize,
    lambda: f64,
}

impl AugSym {
    /// Uses `aug(Y, λ) = 4λ²I`, valid whenever `E[YᵀY]` is a multiple of I.
    pub fn new(y: &DenseMatrix, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::BadParams(format!("lambda = {lambda} must be nonnegative")));
        }
        let d = y.cols();
        let root = DenseMatrix::from_fn(d, d, |i, j| if i == j { 2.0 * lambda } else { 0.0 });
        Ok(Self::assemble(y, &root, lambda))
    }

    /// General form: `aug = (‖E YᵀY‖ + 4λ²)I − E YᵀY` for a caller-supplied
    /// symmetric PSD expectation, whose square root is taken by eigendecomposition.
    pub fn with_expectation(y: &DenseMatrix, lambda: f64, expected_gram: &DenseMatrix) -> Result<Self> {
        let d = y.cols();
        if expected_gram.shape() != (d, d) {
            return Err(Error::DimMismatch(format!("expectation must be {d}x{d}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::BadParams(format!("lambda = {lambda} must be nonnegative")));
        }
        let e = nalgebra::DMatrix::from_fn(d, d, |i, j| 0.5 * (expected_gram[(i, j)] + expected_gram[(j, i)]));
        let eig = e.symmetric_eigen();
        let top = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let shift = top + 4.0 * lambda * lambda;
        let roots = eig.eigenvalues.map(|v| (shift - v).max(0.0).sqrt());
        let half = &eig.eigenvectors * nalgebra::DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
        let root = DenseMatrix::from_fn(d, d, |i, j| 0.5 * (half[(i, j)] + half[(j, i)]));
        Ok(Self::assemble(y, &root, lambda))
    }

    fn assemble(y: &DenseMatrix, aug_root: &DenseMatrix, lambda: f64) -> Self {
        let (m, d) = y.shape();
        let size = 2 * (m + d);
        let (b3, b4) = (d + m, d + 2 * m);
        let mut x = DenseMatrix::zeros(size, size);
        for i in 0..m {
            for j in 0..d {
                x[(b3 + i, j)] = y[(i, j)];
                x[(j, b3 + i)] = y[(i, j)];
            }
        }
        for i in 0..d {
            for j in 0..d {
                x[(b4 + i, j)] = aug_root[(i, j)];
                x[(j, b4 + i)] = aug_root[(i, j)];
            }
        }
        Self { matrix: x, m, d, lambda }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn spectrum(&self) -> Result<SpectrumSet> {
        if self.m + self.d > MAX_AUGSYM_DIM {
            return Err(Error::BadDims(format!("m + d = {} exceeds {MAX_AUGSYM_DIM}", self.m + self.d)));
        }
        symmetric_eigenvalues(&self.matrix)
    }
}

/// Covariance parameters of `augsym(SU, λ)` for a sketch with entry
/// variance p and m rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// √(pm).
    pub sigma: f64,
    /// 2√p.
    pub sigma_star: f64,
    pub r: f64,
}

impl ModelParams {
    pub fn new(m: usize, p: f64) -> Self {
        Self {
            sigma: (p * m as f64).sqrt(),
            sigma_star: 2.0 * p.sqrt(),
            r: 1.0,
        }
    }

    /// `σ*√t + R^{1/3}σ^{2/3}t^{2/3} + Rt`.
    pub fn zeta(&self, t: f64) -> f64 {
        self.sigma_star * t.sqrt() + self.r.cbrt() * self.sigma.powf(2.0 / 3.0) * t.powf(2.0 / 3.0) + self.r * t
    }
}

/// `t = ln(2d/δ)`.
pub fn universality_t(d: usize, delta: f64) -> f64 {
    (2.0 * d as f64 / delta).ln()
}

/// m×d standard Gaussian matrix.
pub fn gaussian_matrix(m: usize, d: usize, src: &mut BitSource) -> DenseMatrix {
    DenseMatrix::from_fn(m, d, |_, _| src.gaussian())
}

/// Spectrum of `augsym(√p G, λ)` for a fresh Gaussian G.
pub fn gaussian_model_spectrum(m: usize, d: usize, p: f64, lambda: f64, src: &mut BitSource) -> Result<SpectrumSet> {
    if m == 0 || d == 0 || !(p > 0.0) {
        return Err(Error::BadDims(format!("need m, d >= 1 and p > 0, got m={m}, d={d}, p={p}")));
    }
    let mut g = gaussian_matrix(m, d, src);
    g.scale_in_place(p.sqrt());
    AugSym::new(&g, lambda)?.spectrum()
}

/// Parameters for a sketch of `kind` applied to the orthonormal `u`; LESS
/// kinds receive the exact scores of `u` with β₁ = β₂ = 1.
pub fn params_for_subspace(kind: SketchKind, m: usize, p: f64, u: &DenseMatrix, seed: u64, rounding: Rounding) -> SketchParams {
    let params = SketchParams::new(kind, m, u.rows(), p, seed).with_rounding(rounding);
    if kind.needs_scores() {
        params.with_scores(orthonormal_scores(u))
    } else {
        params
    }
}

/// The unscaled product `SU` (entries of S with variance p).
fn unscaled_product(kind: Option<SketchKind>, m: usize, p: f64, u: &DenseMatrix, src: &BitSource) -> Result<DenseMatrix> {
    match kind {
        Some(kind) => {
            let params = params_for_subspace(kind, m, p, u, src.seed(), Rounding::Reject);
            let s = build_from(&params, src)?;
            let mut su = s.matrix().mul_dense_scaled(u, 1.0)?;
            // LESS-IND-ROWS with rounding may change p; the entries keep variance p_eff.
            if (s.p() - p).abs() > 1e-12 {
                su.scale_in_place((p / s.p()).sqrt());
            }
            Ok(su)
        }
        None => {
            let mut g = gaussian_matrix(m, u.cols(), &mut src.clone());
            g.scale_in_place(p.sqrt());
            Ok(g)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniversalityParams {
    /// `None` compares an independent Gaussian copy against the model.
    pub kind: Option<SketchKind>,
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub p: f64,
    pub lambda: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalityStats {
    pub distances: Vec<f64>,
    pub median: f64,
    pub p95: f64,
    /// ζ(ln(2d/0.05)).
    pub zeta: f64,
    pub ratio: f64,
    /// Calibrated multiple of ζ.
    pub bound: f64,
    pub pass: bool,
}

/// Empirical quantile by nearest rank.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Hausdorff distances between the augsym spectra of `SU` and of the
/// Gaussian model `√p G`, one per trial, with U = random_orthonormal(n, d).
pub fn universality_check(params: &UniversalityParams) -> Result<UniversalityStats> {
    let UniversalityParams {
        kind,
        m,
        n,
        d,
        p,
        lambda,
        trials,
        seed,
    } = *params;
    if trials == 0 {
        return Err(Error::BadParams("need at least one trial".into()));
    }
    let u = random_orthonormal(n, d, seed)?;
    let root = BitSource::new(seed);
    let distances: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let trial = root.derive(t as u64);
            let su = unscaled_product(kind, m, p, &u, &trial.derive(0))?;
            let sketch_spec = AugSym::new(&su, lambda)?.spectrum()?;
            let model = gaussian_model_spectrum(m, d, p, lambda, &mut trial.derive(1))?;
            hausdorff_distance(&sketch_spec, &model)
        })
        .collect::<Result<_>>()?;
    let zeta = ModelParams::new(m, p).zeta(universality_t(d, 0.05));
    let p95 = quantile(&distances, 0.95);
    let bound = calibration::defaults().universality_factor * zeta;
    Ok(UniversalityStats {
        median: median(&distances),
        p95,
        zeta,
        ratio: p95 / zeta,
        bound,
        pass: p95 <= bound,
        distances,
    })
}

/// Operating point for [`singular_value_bounds_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsSpec {
    pub kind: SketchKind,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub p: f64,
    pub eps: f64,
    pub delta: f64,
    /// Heavy rows of the spiked test subspace; 0 gives a random subspace.
    pub heavy: usize,
    pub trials: usize,
    pub seed: u64,
    pub rounding: Rounding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsOutcome {
    /// Scaled (smin, smax) per trial.
    pub singular: Vec<(f64, f64)>,
    pub success_fraction: f64,
    /// λ = ε√(pm)/10.
    pub lambda: f64,
    /// Scaled band `1 ∓ (√(pd) + √(2p ln(4/δ)) + 5λ)/√(pm)`.
    pub predicted_lower: f64,
    pub predicted_upper: f64,
    pub median_eps: f64,
}

/// Fraction of trials with `1−ε ≤ smin` and `smax ≤ 1+ε` for the scaled sketch.
pub fn singular_value_bounds_check(spec: &BoundsSpec) -> Result<BoundsOutcome> {
    let BoundsSpec {
        kind,
        n,
        d,
        m,
        p,
        eps,
        delta,
        heavy,
        trials,
        seed,
        rounding,
    } = *spec;
    if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::BadParams(format!("eps = {eps} and delta = {delta} must lie in (0, 1)")));
    }
    if trials == 0 {
        return Err(Error::BadParams("need at least one trial".into()));
    }
    let u = if heavy > 0 {
        spiked_orthonormal(n, d, heavy, seed)?
    } else {
        random_orthonormal(n, d, seed)?
    };
    let root = BitSource::new(seed);
    let singular: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(f64, f64)> {
            let params = params_for_subspace(kind, m, p, &u, seed, rounding);
            let s = build_from(&params, &root.derive(t as u64))?;
            let sv = singular_values(&s.apply(&u)?);
            Ok((sv.min().unwrap_or(0.0), sv.max().unwrap_or(0.0)))
        })
        .collect::<Result<_>>()?;
    let ok = singular.iter().filter(|(lo, hi)| *lo >= 1.0 - eps && *hi <= 1.0 + eps).count();
    let pm = p * m as f64;
    let lambda = eps * pm.sqrt() / 10.0;
    let spread = ((p * d as f64).sqrt() + (2.0 * p * (4.0 / delta).ln()).sqrt() + 5.0 * lambda) / pm.sqrt();
    let eps_hat: Vec<f64> = singular.iter().map(|&(lo, hi)| (hi - 1.0).max(1.0 / lo - 1.0)).collect();
    Ok(BoundsOutcome {
        success_fraction: ok as f64 / trials as f64,
        lambda,
        predicted_lower: 1.0 - spread,
        predicted_upper: 1.0 + spread,
        median_eps: median(&eps_hat),
        singular,
    })
}

/// Entrywise moments of the unscaled sketch over independent builds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentAudit {
    pub kind: SketchKind,
    pub builds: usize,
    pub p: f64,
    pub max_abs_mean: f64,
    pub max_var_dev: f64,
    pub max_abs_cov: f64,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub pairs: Vec<((usize, usize), (usize, usize))>,
    pub covariances: Vec<f64>,
}

/// Builds `params` `builds` times on independent streams and measures the
/// per-entry mean and variance and the covariance of `pairs` random distinct
/// entry pairs.
pub fn moment_audit(params: &SketchParams, builds: usize, pairs: usize, seed: u64) -> Result<MomentAudit> {
    if builds < 2 {
        return Err(Error::BadParams("need at least two builds".into()));
    }
    let (m, n) = (params.m, params.n);
    let cells = m * n;
    if cells < 2 {
        return Err(Error::BadDims("need at least two entries".into()));
    }
    let root = BitSource::new(seed);
    let mut pick = root.derive(u64::MAX);
    let pair_list: Vec<(usize, usize)> = (0..pairs)
        .map(|_| loop {
            let a = pick.uniform_index(cells as u64) as usize;
            let b = pick.uniform_index(cells as u64) as usize;
            if a != b {
                break (a, b);
            }
        })
        .collect();

    struct Acc {
        sum: Vec<f64>,
        sq: Vec<f64>,
        cross: Vec<f64>,
        p: f64,
    }
    let zero = || Acc {
        sum: vec![0.0; cells],
        sq: vec![0.0; cells],
        cross: vec![0.0; pair_list.len()],
        p: 0.0,
    };
    let acc = (0..builds)
        .into_par_iter()
        .try_fold(zero, |mut acc, b| -> Result<Acc> {
            let s = build_from(params, &root.derive(b as u64))?;
            let mut dense = vec![0.0; cells];
            for (i, j, v) in s.matrix().triplets() {
                dense[i * n + j] = v;
            }
            for (c, &v) in dense.iter().enumerate() {
                acc.sum[c] += v;
                acc.sq[c] += v * v;
            }
            for (k, &(x, y)) in pair_list.iter().enumerate() {
                acc.cross[k] += dense[x] * dense[y];
            }
            acc.p = s.p();
            Ok(acc)
        })
        .try_reduce(zero, |mut a, b| {
            a.sum.iter_mut().zip(&b.sum).for_each(|(x, y)| *x += y);
            a.sq.iter_mut().zip(&b.sq).for_each(|(x, y)| *x += y);
            a.cross.iter_mut().zip(&b.cross).for_each(|(x, y)| *x += y);
            a.p = a.p.max(b.p);
            Ok(a)
        })?;
    let nb = builds as f64;
    let means: Vec<f64> = acc.sum.iter().map(|s| s / nb).collect();
    let variances: Vec<f64> = acc.sq.iter().zip(&means).map(|(q, mu)| (q - nb * mu * mu) / (nb - 1.0)).collect();
    let covariances: Vec<f64> = pair_list
        .iter()
        .zip(&acc.cross)
        .map(|(&(x, y), c)| (c - nb * means[x] * means[y]) / (nb - 1.0))
        .collect();
    let p = acc.p;
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    Ok(MomentAudit {
        kind: params.kind,
        builds,
        p,
        max_abs_mean: max_abs(&means),
        max_var_dev: variances.iter().fold(0.0f64, |a, v| a.max((v - p).abs())),
        max_abs_cov: max_abs(&covariances),
        pairs: pair_list.iter().map(|&(x, y)| ((x / n, x % n), (y / n, y % n))).collect(),
        means,
        variances,
        covariances,
    })
}

/// Largest sample standard deviation of `⟨v, (X − EX) w⟩` over random unit
/// pairs, where `X = augsym(SU, 0)` and U is a random orthonormal n×d basis.
#[allow(clippy::too_many_arguments)]
pub fn sigma_star_estimate(kind: SketchKind, m: usize, n: usize, d: usize, p: f64, pairs: usize, samples: usize, seed: u64) -> Result<f64> {
    if samples < 2 || pairs == 0 {
        return Err(Error::BadParams("need at least two samples and one pair".into()));
    }
    let u = random_orthonormal(n, d, seed)?;
    let size = 2 * (m + d);
    let root = BitSource::new(seed);
    let mut dir = root.derive(u64::MAX);
    let mut unit = || {
        let mut v: Vec<f64> = (0..size).map(|_| dir.gaussian()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        v
    };
    let dirs: Vec<(Vec<f64>, Vec<f64>)> = (0..pairs).map(|_| (unit(), unit())).collect();
    let forms: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|s| -> Result<Vec<f64>> {
            let su = unscaled_product(Some(kind), m, p, &u, &root.derive(s as u64))?;
            // vᵀ X w with X = augsym(SU, 0): blocks 1 and 3 only.
            let b3 = d + m;
            Ok(dirs
                .iter()
                .map(|(v, w)| {
                    let mut acc = 0.0;
                    for i in 0..m {
                        for j in 0..d {
                            let y = su[(i, j)];
                            acc += y * (v[b3 + i] * w[j] + v[j] * w[b3 + i]);
                        }
                    }
                    acc
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let ns = samples as f64;
    Ok((0..pairs)
        .map(|k| {
            let mean = forms.iter().map(|f| f[k]).sum::<f64>() / ns;
            (forms.iter().map(|f| (f[k] - mean).powi(2)).sum::<f64>() / (ns - 1.0)).sqrt()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_zero_matrix() {
        let a = AugSym::new(&DenseMatrix::zeros(3, 2), 0.0).unwrap();
        assert_eq!(a.matrix(), &DenseMatrix::zeros(10, 10));
    }

    #[test]
    fn spectrum_is_plus_minus_singular_values() {
        let y = gaussian_matrix(20, 4, &mut BitSource::new(3));
        let spec = AugSym::new(&y, 0.0).unwrap().spectrum().unwrap();
        let sv = singular_values(&y);
        let mut want: Vec<f64> = sv.values().iter().flat_map(|&s| [s, -s]).collect();
        want.extend(std::iter::repeat(0.0).take(40));
        want.sort_by(f64::total_cmp);
        for (g, w) in spec.values().iter().zip(&want) {
            assert!((g - w).abs() < 1e-8, "{g} vs {w}");
        }
    }

    #[test]
    fn lambda_shifts_nonzero_spectrum() {
        let y = gaussian_matrix(12, 3, &mut BitSource::new(9));
        let lam = 0.75;
        let spec = AugSym::new(&y, lam).unwrap().spectrum().unwrap();
        let nonzero: Vec<f64> = spec.values().iter().copied().filter(|v| v.abs() > 1e-9).collect();
        assert_eq!(nonzero.len(), 6);
        assert!(nonzero.iter().all(|v| v.abs() >= 2.0 * lam - 1e-12));
    }

    #[test]
    fn general_form_reduces_to_simple() {
        let y = gaussian_matrix(5, 3, &mut BitSource::new(1));
        let e = DenseMatrix::from_fn(3, 3, |i, j| if i == j { 2.5 } else { 0.0 });
        let a = AugSym::with_expectation(&y, 0.4, &e).unwrap();
        let b = AugSym::new(&y, 0.4).unwrap();
        assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-12);
    }

    #[test]
    fn zeta_monotone() {
        let base = ModelParams::new(64, 0.25);
        assert!(base.zeta(2.0) < base.zeta(3.0));
        assert!(ModelParams::new(64, 0.3).zeta(2.0) > base.zeta(2.0));
        assert!(ModelParams::new(80, 0.25).zeta(2.0) > base.zeta(2.0));
    }

    #[test]
    fn quantiles() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(median(&v), 2.5);
        assert_eq!(quantile(&v, 0.95), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.0);
    }
}
