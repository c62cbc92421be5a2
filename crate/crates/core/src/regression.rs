//! Least squares through sketching: sketch-and-solve, preconditioned
//! mini-batch SGD with leverage-score row sampling, and exact oracles.

use crate::calibration;
use crate::error::{Error, Result};
use crate::leverage::fast_scores;
use crate::linalg::{cholesky_solve, dot, lstsq, qr_factor, singular_values, upper_triangular_inverse, DenseMatrix};
use crate::pipeline::{EmbeddingSpec, OseChain};
use crate::randbits::{BitSource, CategoricalTable};
use crate::sketch::LinearSketch;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// `‖Ax − b‖²`.
pub fn objective(a: &DenseMatrix, b: &[f64], x: &[f64]) -> Result<f64> {
    let ax = a.matvec(x)?;
    Ok(ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum())
}

/// `2Aᵀ(Ax − b)`.
pub fn full_gradient(a: &DenseMatrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let mut r = a.matvec(x)?;
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = 2.0 * (*ri - bi));
    a.t_matvec(&r)
}

/// Minimizer of `‖Ax − b‖² + λ‖x‖²` through the regularized normal equations.
pub fn ridge_oracle(a: &DenseMatrix, b: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::DimMismatch(format!("{} rows but b has {} entries", a.rows(), b.len())));
    }
    if !(lambda >= 0.0) {
        return Err(Error::BadParams(format!("lambda = {lambda} must be nonnegative")));
    }
    let mut gram = a.t_matmul(a)?;
    for i in 0..a.cols() {
        gram[(i, i)] += lambda;
    }
    cholesky_solve(&gram, &a.t_matvec(b)?)
}

/// Unregularized least squares through the normal equations.
pub fn normal_equations_oracle(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    ridge_oracle(a, b, 0.0)
}

/// `argmin ‖SAx − Sb‖` via QR of SA.
pub fn sketch_and_solve(a: &DenseMatrix, b: &[f64], s: &dyn LinearSketch) -> Result<Vec<f64>> {
    let sab = s.apply(&a.hstack_column(b)?)?;
    let d = a.cols();
    lstsq(&sab.leading_columns(d), &sab.column(d))
}

/// Step-size base β.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepVariant {
    /// β = (k/8)/(k + 4αd).
    #[default]
    Eighth,
    /// β = (k/4)/(k + 4αd).
    Quarter,
}

/// Decaying steps `η_t = β/(1 + βt/8)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdSchedule {
    pub k: usize,
    pub alpha: f64,
    pub d: usize,
    pub iters: usize,
    pub variant: StepVariant,
    pub beta: f64,
}

impl SgdSchedule {
    pub fn new(k: usize, alpha: f64, d: usize, iters: usize, variant: StepVariant) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyBatch);
        }
        if !(alpha >= 1.0 && alpha.is_finite()) || d == 0 {
            return Err(Error::BadParams(format!("need alpha >= 1 and d >= 1, got alpha={alpha}, d={d}")));
        }
        let kf = k as f64;
        let num = match variant {
            StepVariant::Eighth => kf / 8.0,
            StepVariant::Quarter => kf / 4.0,
        };
        Ok(Self {
            k,
            alpha,
            d,
            iters,
            variant,
            beta: num / (kf + 4.0 * alpha * d as f64),
        })
    }

    pub fn eta(&self, t: usize) -> f64 {
        self.beta / (1.0 + self.beta * t as f64 / 8.0)
    }

    /// `min{1/4, k/(8αd)}`.
    pub fn step_cap(&self) -> f64 {
        (0.25f64).min(self.k as f64 / (8.0 * self.alpha * self.d as f64))
    }
}

/// Iterates and objective values of one SGD run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdTrace {
    /// x₀ … x_T.
    pub iterates: Vec<Vec<f64>>,
    /// f(x₀) … f(x_T).
    pub objective: Vec<f64>,
    /// η₀ … η_{T−1}.
    pub eta: Vec<f64>,
    pub schedule: SgdSchedule,
    pub seed: u64,
    pub stream: u64,
}

impl SgdTrace {
    pub fn last(&self) -> &[f64] {
        self.iterates.last().expect("trace holds x0")
    }

    /// `t,f,eta` rows; the final row has an empty eta.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,f,eta\n");
        for (t, f) in self.objective.iter().enumerate() {
            match self.eta.get(t) {
                Some(e) => writeln!(out, "{t},{f:e},{e:e}"),
                None => writeln!(out, "{t},{f:e},"),
            }
            .expect("writing to a String");
        }
        out
    }

    /// Running minimum of the objective.
    pub fn running_min(&self) -> Vec<f64> {
        self.objective
            .iter()
            .scan(f64::INFINITY, |m, &f| {
                *m = m.min(f);
                Some(*m)
            })
            .collect()
    }
}

/// k i.i.d. row indices drawn with probability proportional to `weights`.
pub fn sample_minibatch(weights: &[f64], k: usize, src: &mut BitSource) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::EmptyBatch);
    }
    let table = CategoricalTable::new(weights)?;
    sample_from(&table, k, src)
}

fn sample_from(table: &CategoricalTable, k: usize, src: &mut BitSource) -> Result<Vec<usize>> {
    (0..k).map(|_| table.sample(src).ok_or(Error::AllZeroWeights)).collect()
}

/// `2(S_tA)ᵀ(S_tAx − S_tb)` where row r of `S_t` is `e_{I_r}ᵀ/√(k p_{I_r})`.
pub fn minibatch_gradient(a: &DenseMatrix, b: &[f64], x: &[f64], batch: &[usize], probs: &[f64]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if x.len() != a.cols() || b.len() != a.rows() || probs.len() != a.rows() {
        return Err(Error::DimMismatch("gradient operands disagree in size".into()));
    }
    let k = batch.len() as f64;
    let mut g = vec![0.0; a.cols()];
    for &i in batch {
        let row = a.row(i);
        let w = 2.0 * (dot(row, x) - b[i]) / (k * probs[i]);
        g.iter_mut().zip(row).for_each(|(gj, aj)| *gj += w * aj);
    }
    Ok(g)
}

/// Checks `p_i ≥ ℓ_i/(αd)` against exact scores.
pub fn check_sampling(probs: &[f64], exact: &[f64], alpha: f64, d: usize) -> Result<()> {
    if probs.len() != exact.len() {
        return Err(Error::DimMismatch(format!(
            "{} probabilities for {} scores",
            probs.len(),
            exact.len()
        )));
    }
    let denom = alpha * d as f64;
    // Relative slack for scores computed in floating point.
    let tol = 1e-9;
    for (row, (&p, &l)) in probs.iter().zip(exact).enumerate() {
        let required = l / denom;
        if p < required * (1.0 - tol) {
            return Err(Error::ScoreViolation { row, prob: p, required });
        }
    }
    Ok(())
}

/// Preconditioned mini-batch SGD from `x0`. Rows are sampled proportionally
/// to `weights`; when `exact` scores are given, the sampling condition is
/// checked first.
#[allow(clippy::too_many_arguments)]
pub fn sgd_solve(
    a: &DenseMatrix,
    b: &[f64],
    x0: &[f64],
    r: &DenseMatrix,
    weights: &[f64],
    schedule: &SgdSchedule,
    src: &mut BitSource,
    exact: Option<&[f64]>,
) -> Result<SgdTrace> {
    let (n, d) = a.shape();
    if b.len() != n || x0.len() != d || weights.len() != n || r.shape() != (d, d) {
        return Err(Error::DimMismatch(format!(
            "A is {n}x{d}, b has {}, x0 has {}, weights have {}, R is {}x{}",
            b.len(),
            x0.len(),
            weights.len(),
            r.rows(),
            r.cols()
        )));
    }
    let table = CategoricalTable::new(weights)?;
    let total = table.total();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    if let Some(l) = exact {
        check_sampling(&probs, l, schedule.alpha, d)?;
    }
    let (seed, stream) = (src.seed(), src.stream());
    let mut x = x0.to_vec();
    let mut trace = SgdTrace {
        iterates: vec![x.clone()],
        objective: vec![objective(a, b, &x)?],
        eta: Vec::with_capacity(schedule.iters),
        schedule: *schedule,
        seed,
        stream,
    };
    for t in 0..schedule.iters {
        let batch = sample_from(&table, schedule.k, src)?;
        let g = minibatch_gradient(a, b, &x, &batch, &probs)?;
        let step = r.matvec(&r.t_matvec(&g)?)?;
        let eta = schedule.eta(t);
        x.iter_mut().zip(&step).for_each(|(xi, si)| *xi -= eta * si);
        trace.eta.push(eta);
        trace.objective.push(objective(a, b, &x)?);
        trace.iterates.push(x.clone());
    }
    Ok(trace)
}

/// Monte-Carlo mean and standard error of the mini-batch gradient at `x`.
pub fn gradient_moments(
    a: &DenseMatrix,
    b: &[f64],
    x: &[f64],
    weights: &[f64],
    k: usize,
    resamples: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if resamples < 2 {
        return Err(Error::BadParams("need at least two resamples".into()));
    }
    let table = CategoricalTable::new(weights)?;
    let total = table.total();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let root = BitSource::new(seed);
    let draws: Vec<Vec<f64>> = (0..resamples)
        .into_par_iter()
        .map(|i| {
            let batch = sample_from(&table, k, &mut root.derive(i as u64))?;
            minibatch_gradient(a, b, x, &batch, &probs)
        })
        .collect::<Result<_>>()?;
    let d = x.len();
    let nf = resamples as f64;
    let mean: Vec<f64> = (0..d).map(|j| draws.iter().map(|g| g[j]).sum::<f64>() / nf).collect();
    let se = (0..d)
        .map(|j| {
            let var = draws.iter().map(|g| (g[j] - mean[j]).powi(2)).sum::<f64>() / (nf - 1.0);
            (var / nf).sqrt()
        })
        .collect();
    Ok((mean, se))
}

/// Constant-distortion sketch of A and the preconditioner `R = T⁻¹` from
/// `SA = QT`.
pub struct Preconditioner {
    pub chain: OseChain,
    pub sa: DenseMatrix,
    pub sb: Vec<f64>,
    pub r: DenseMatrix,
}

impl Preconditioner {
    pub fn build(a: &DenseMatrix, b: &[f64], spec: &EmbeddingSpec, root: &BitSource) -> Result<Self> {
        let chain = OseChain::from_source(spec, root, false)?;
        let d = a.cols();
        let sab = chain.apply(&a.hstack_column(b)?)?;
        let sa = sab.leading_columns(d);
        let sb = sab.column(d);
        let (_, t) = qr_factor(&sa)?;
        let r = upper_triangular_inverse(&t)?;
        Ok(Self { chain, sa, sb, r })
    }

    /// `κ(AR)²`.
    pub fn kappa_sq(&self, a: &DenseMatrix) -> Result<f64> {
        let sv = singular_values(&a.matmul(&self.r)?);
        let (lo, hi) = (sv.min().unwrap_or(0.0), sv.max().unwrap_or(0.0));
        Ok((hi / lo).powi(2))
    }

    /// `argmin ‖SAx − Sb‖`.
    pub fn initial_point(&self) -> Result<Vec<f64>> {
        lstsq(&self.sa, &self.sb)
    }
}

/// Embedding spec for the least-squares preconditioner: the chain with
/// m₃ = (1 + θ)d for the calibrated regression θ.
pub fn preconditioner_spec(n: usize, d: usize) -> EmbeddingSpec {
    let mut spec = EmbeddingSpec::new(n, d);
    spec.theta = calibration::defaults().regression_theta;
    spec
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LsqMode {
    /// Sketch-and-solve only, one pass over A and b.
    SinglePass,
    #[default]
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsqOptions {
    pub mode: LsqMode,
    /// Mini-batch size; αd when absent.
    pub batch: Option<usize>,
    /// Iterations; ⌈c/ε⌉ when absent.
    pub iters: Option<usize>,
    /// Score approximation factor; ⌈n^γ⌉ when absent.
    pub alpha: Option<f64>,
    pub variant: StepVariant,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self {
            mode: LsqMode::Sgd,
            batch: None,
            iters: None,
            alpha: None,
            variant: StepVariant::Eighth,
        }
    }
}

pub struct LsqSolution {
    pub x: Vec<f64>,
    pub x0: Vec<f64>,
    pub trace: Option<SgdTrace>,
    pub kappa_sq: f64,
}

/// Sketch → R → estimated scores → x₀ → SGD for ⌈c/ε⌉ iterations.
pub fn least_squares_fast(a: &DenseMatrix, b: &[f64], eps: f64, spec: &EmbeddingSpec, opts: &LsqOptions, seed: u64) -> Result<LsqSolution> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::BadParams(format!("eps = {eps} must lie in (0, 1)")));
    }
    let (n, d) = a.shape();
    let mut spec = spec.clone();
    spec.n = n;
    spec.d = d;
    let root = BitSource::new(seed);
    let pre = Preconditioner::build(a, b, &spec, &root.derive(1))?;
    let x0 = pre.initial_point()?;
    let kappa_sq = pre.kappa_sq(a)?;
    if opts.mode == LsqMode::SinglePass {
        return Ok(LsqSolution {
            x: x0.clone(),
            x0,
            trace: None,
            kappa_sq,
        });
    }
    let scores = fast_scores(a, &pre.r, spec.probe_count(), &mut root.derive(2))?;
    let alpha = opts.alpha.unwrap_or_else(|| (n as f64).powf(spec.gamma).ceil());
    let k = opts.batch.unwrap_or((alpha * d as f64).ceil() as usize);
    let iters = opts
        .iters
        .unwrap_or_else(|| (calibration::defaults().sgd_iter_factor / eps).ceil() as usize);
    let schedule = SgdSchedule::new(k, alpha, d, iters, opts.variant)?;
    let trace = sgd_solve(a, b, &x0, &pre.r, scores.scores(), &schedule, &mut root.derive(3), None)?;
    Ok(LsqSolution {
        x: trace.last().to_vec(),
        x0,
        trace: Some(trace),
        kappa_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_closed_form() {
        let s = SgdSchedule::new(50, 1.0, 50, 10, StepVariant::Eighth).unwrap();
        assert_eq!(s.beta, 6.25 / 250.0);
        assert_eq!(s.eta(0), s.beta);
        assert_eq!(s.eta(8), s.beta / (1.0 + s.beta));
        assert!(s.eta(0) <= s.step_cap());
        let q = SgdSchedule::new(50, 1.0, 50, 10, StepVariant::Quarter).unwrap();
        assert_eq!(q.beta, 2.0 * s.beta);
        assert!(matches!(
            SgdSchedule::new(0, 1.0, 5, 1, StepVariant::Eighth),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn one_positive_weight_repeats() {
        let mut w = vec![0.0; 10];
        w[3] = 0.5;
        let idx = sample_minibatch(&w, 7, &mut BitSource::new(1)).unwrap();
        assert_eq!(idx, vec![3; 7]);
        assert!(matches!(
            sample_minibatch(&[0.0; 4], 2, &mut BitSource::new(1)),
            Err(Error::AllZeroWeights)
        ));
        assert!(matches!(sample_minibatch(&w, 0, &mut BitSource::new(1)), Err(Error::EmptyBatch)));
    }

    #[test]
    fn identity_design_converges() {
        let d = 6;
        let a = DenseMatrix::identity(d);
        let b: Vec<f64> = (0..d).map(|i| i as f64 - 2.5).collect();
        let sched = SgdSchedule::new(d, 1.0, d, 500, StepVariant::Eighth).unwrap();
        let l = vec![1.0; d];
        let trace = sgd_solve(
            &a,
            &b,
            &vec![0.0; d],
            &DenseMatrix::identity(d),
            &l,
            &sched,
            &mut BitSource::new(4),
            Some(&l),
        )
        .unwrap();
        assert!(*trace.objective.last().unwrap() <= 1e-6);
        assert_eq!(trace.iterates.len(), 501);
        assert_eq!(trace.to_csv().lines().count(), 502);
    }

    #[test]
    fn score_violation_detected() {
        let err = check_sampling(&[0.9, 0.1], &[0.5, 0.5], 1.0, 1).unwrap_err();
        assert!(matches!(err, Error::ScoreViolation { row: 1, .. }));
    }

    #[test]
    fn identity_sketch_and_solve() {
        let b = [1.0, -2.0, 3.0];
        let x = sketch_and_solve(&DenseMatrix::identity(3), &b, &crate::sketch::Identity(3)).unwrap();
        for (xi, bi) in x.iter().zip(b) {
            assert!((xi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn ridge_matches_augmented_lstsq() {
        let a = DenseMatrix::from_fn(8, 3, |i, j| ((i * 3 + j) as f64).sin());
        let b: Vec<f64> = (0..8).map(|i| (i as f64).cos()).collect();
        let lam: f64 = 0.7;
        // [A; √λ I] x ≈ [b; 0]
        let big = DenseMatrix::from_fn(11, 3, |i, j| {
            if i < 8 {
                a[(i, j)]
            } else if i - 8 == j {
                lam.sqrt()
            } else {
                0.0
            }
        });
        let mut bb = b.clone();
        bb.extend([0.0; 3]);
        let want = lstsq(&big, &bb).unwrap();
        let got = ridge_oracle(&a, &b, lam).unwrap();
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-10);
        }
    }
}
