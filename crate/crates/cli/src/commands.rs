use crate::input::{load_matrix, load_rhs};
use crate::Status;
use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;
use sketchbench::calibration::{calibrate as run_calibration, CalibrationRun};
use sketchbench::config::RunConfig;
use sketchbench::leverage::{exact_scores, load_scores};
use sketchbench::linalg::mtx::{write_matrix_market, MtxMatrix};
use sketchbench::linalg::{hausdorff_distance, qr_factor, random_orthonormal, spiked_orthonormal, DenseMatrix};
use sketchbench::pipeline::{fast_low_distortion, fast_ose_chain, fast_ose_lowbits, reduce_regression, sketch_report, EmbeddingSpec};
use sketchbench::randbits::BitSource;
use sketchbench::regression::{least_squares_fast, normal_equations_oracle, objective, LsqMode, LsqOptions, StepVariant};
use sketchbench::sketch::{build_from, save_sketch, Rounding, SketchKind, SketchParams};
use sketchbench::verify::{
    gaussian_model_spectrum, moment_audit, params_for_subspace, singular_value_bounds_check, universality_check, AugSym, BoundsSpec,
    UniversalityParams,
};
use std::fmt::Write as _;

fn seed(cfg: &RunConfig) -> u64 {
    cfg.seed.unwrap_or(0)
}

fn emit(cfg: &RunConfig, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match &cfg.report {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {path}")),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_csv(cfg: &RunConfig, text: &str) -> Result<()> {
    if let Some(path) = &cfg.csv {
        std::fs::write(path, text).with_context(|| format!("writing {path}"))?;
    }
    Ok(())
}

fn write_dense(path: &str, m: &DenseMatrix) -> Result<()> {
    write_matrix_market(path, &MtxMatrix::Dense(m.clone())).with_context(|| format!("writing {path}"))
}

fn kind(cfg: &RunConfig) -> Result<SketchKind> {
    Ok(cfg.kind.as_deref().context("--kind is required")?.parse()?)
}

fn rounding(cfg: &RunConfig) -> Result<Rounding> {
    match cfg.rounding.as_deref() {
        None | Some("reject") => Ok(Rounding::Reject),
        Some("up") => Ok(Rounding::Up),
        Some(other) => bail!("unknown rounding '{other}' (want reject or up)"),
    }
}

fn spec_for(cfg: &RunConfig, n: usize, d: usize) -> EmbeddingSpec {
    let mut spec = EmbeddingSpec::new(n, d);
    spec.eps = cfg.eps.unwrap_or(spec.eps);
    spec.delta = cfg.delta.unwrap_or(spec.delta);
    spec.theta = cfg.theta.unwrap_or(spec.theta);
    spec.gamma = cfg.gamma.unwrap_or(spec.gamma);
    spec.m1 = cfg.m1;
    spec.m2 = cfg.m2;
    spec.m3 = cfg.m3;
    if let Some(k) = cfg.kind.as_deref().and_then(|k| k.parse::<SketchKind>().ok()) {
        if k.needs_scores() {
            spec.less_kind = k;
            spec.stage3_kind = k;
        }
    }
    spec
}

pub fn sketch(cfg: &RunConfig) -> Result<Status> {
    let kind = kind(cfg)?;
    let seed = seed(cfg);
    let a = match (&cfg.input, &cfg.synthetic) {
        (None, None) => None,
        _ => Some(load_matrix(cfg, seed)?),
    };
    let n = match (&a, cfg.n) {
        (Some(a), _) => a.rows(),
        (None, Some(n)) => n,
        (None, None) => bail!("--n is required without an input matrix"),
    };
    let m = cfg.m.context("--m is required")?;
    let p = cfg.p.context("--p is required")?;
    let mut params = SketchParams::new(kind, m, n, p, seed).with_rounding(rounding(cfg)?);
    if kind.needs_scores() {
        let scores = match (&cfg.scores, &a) {
            (Some(path), _) => load_scores(path, format!("{path}.json")).with_context(|| format!("reading scores {path}"))?,
            (None, Some(a)) => exact_scores(a)?,
            (None, None) => bail!("{kind} needs --scores or an input matrix"),
        };
        params = params.with_scores(scores);
    }
    let s = build_from(&params, &BitSource::new(seed))?;
    if let Some(path) = &cfg.output {
        save_sketch(&s, path, format!("{path}.json")).with_context(|| format!("writing {path}"))?;
    }
    match a {
        Some(a) => {
            let (q, _) = qr_factor(&a)?;
            emit(cfg, &sketch_report(&s, &q)?)?;
        }
        None => emit(cfg, &sketchbench::sketch::SketchSidecar::of(&s))?,
    }
    Ok(Status::Pass)
}

pub fn ose_chain(cfg: &RunConfig) -> Result<Status> {
    let seed = seed(cfg);
    let a = load_matrix(cfg, seed)?;
    let spec = spec_for(cfg, a.rows(), a.cols());
    let (sa, report, _) = if cfg.lowbits == Some(true) {
        fast_ose_lowbits(&a, &spec, seed)?
    } else {
        fast_ose_chain(&a, &spec, seed)?
    };
    if let Some(path) = &cfg.output {
        write_dense(path, &sa)?;
    }
    emit(cfg, &report)?;
    Ok(Status::Pass)
}

pub fn low_distortion(cfg: &RunConfig) -> Result<Status> {
    let seed = seed(cfg);
    let a = load_matrix(cfg, seed)?;
    let spec = spec_for(cfg, a.rows(), a.cols());
    let out = fast_low_distortion(&a, &spec, seed)?;
    if let Some(path) = &cfg.output {
        write_dense(path, &out.sa)?;
    }
    emit(cfg, &out.report)?;
    Ok(Status::Pass)
}

pub fn reduce(cfg: &RunConfig) -> Result<Status> {
    let seed = seed(cfg);
    let a = load_matrix(cfg, seed)?;
    let b = load_rhs(cfg, &a, seed)?;
    let spec = spec_for(cfg, a.rows(), a.cols() + 1);
    let (ar, br, report) = reduce_regression(&a, &b, &spec, seed)?;
    if let Some(path) = &cfg.output {
        write_dense(path, &ar)?;
        write_dense(&format!("{path}.rhs.mtx"), &DenseMatrix::column_vector(&br))?;
    }
    emit(cfg, &report)?;
    Ok(Status::Pass)
}

pub fn lsq(cfg: &RunConfig) -> Result<Status> {
    let seed = seed(cfg);
    let a = load_matrix(cfg, seed)?;
    let b = load_rhs(cfg, &a, seed)?;
    let eps = cfg.eps.unwrap_or(0.5);
    let mode = match cfg.mode.as_deref() {
        None | Some("sgd") => LsqMode::Sgd,
        Some("single-pass") => LsqMode::SinglePass,
        Some(other) => bail!("unknown mode '{other}' (want single-pass or sgd)"),
    };
    let variant = match cfg.variant.as_deref() {
        None | Some("eighth") => StepVariant::Eighth,
        Some("quarter") => StepVariant::Quarter,
        Some(other) => bail!("unknown step variant '{other}' (want eighth or quarter)"),
    };
    let opts = LsqOptions {
        mode,
        batch: cfg.batch,
        iters: cfg.iters,
        alpha: cfg.alpha,
        variant,
    };
    let mut spec = sketchbench::regression::preconditioner_spec(a.rows(), a.cols());
    spec.gamma = cfg.gamma.unwrap_or(spec.gamma);
    spec.theta = cfg.theta.unwrap_or(spec.theta);
    let sol = least_squares_fast(&a, &b, eps, &spec, &opts, seed)?;
    if let Some(trace) = &sol.trace {
        write_csv(cfg, &trace.to_csv())?;
    }
    if let Some(path) = &cfg.output {
        write_dense(path, &DenseMatrix::column_vector(&sol.x))?;
    }
    let f_star = normal_equations_oracle(&a, &b).and_then(|x| objective(&a, &b, &x)).ok();
    emit(
        cfg,
        &json!({
            "schema": 1,
            "mode": mode,
            "eps": eps,
            "f": objective(&a, &b, &sol.x)?,
            "f0": objective(&a, &b, &sol.x0)?,
            "f_star": f_star,
            "kappa_sq": sol.kappa_sq,
            "iters": sol.trace.as_ref().map_or(0, |t| t.eta.len()),
            "batch": sol.trace.as_ref().map(|t| t.schedule.k),
            "x": sol.x,
        }),
    )?;
    Ok(Status::Pass)
}

pub fn verify(cfg: &RunConfig) -> Result<Status> {
    let seed = seed(cfg);
    let check = cfg
        .check
        .as_deref()
        .context("--check is required (moments, spectrum, universality or bounds)")?;
    let kind = kind(cfg)?;
    let rounding = rounding(cfg)?;
    match check {
        "moments" => {
            let (m, n, d, p) = (cfg.m.unwrap_or(16), cfg.n.unwrap_or(64), cfg.d.unwrap_or(8), cfg.p.unwrap_or(0.25));
            let tol = cfg.tolerance.unwrap_or(0.015);
            let u = spiked_orthonormal(n, d, cfg.heavy.unwrap_or(2), seed)?;
            let params = params_for_subspace(kind, m, p, &u, seed, rounding);
            let audit = moment_audit(&params, cfg.trials.unwrap_or(20_000), 200, seed)?;
            let mut csv = String::from("row,col,mean,variance\n");
            for (c, (mu, var)) in audit.means.iter().zip(&audit.variances).enumerate() {
                writeln!(csv, "{},{},{mu:e},{var:e}", c / n, c % n)?;
            }
            write_csv(cfg, &csv)?;
            let pass = audit.max_abs_mean <= tol && audit.max_var_dev <= tol && audit.max_abs_cov <= tol;
            emit(
                cfg,
                &json!({
                    "schema": 1,
                    "check": "moments",
                    "kind": kind,
                    "builds": audit.builds,
                    "p": audit.p,
                    "tolerance": tol,
                    "max_abs_mean": audit.max_abs_mean,
                    "max_var_dev": audit.max_var_dev,
                    "max_abs_cov": audit.max_abs_cov,
                    "pass": pass,
                }),
            )?;
            Ok(if pass { Status::Pass } else { Status::Below })
        }
        "spectrum" => {
            let (m, n, d, p) = (cfg.m.unwrap_or(64), cfg.n.unwrap_or(256), cfg.d.unwrap_or(8), cfg.p.unwrap_or(0.25));
            let lambda = cfg.lambda.unwrap_or(0.0);
            let u = random_orthonormal(n, d, seed)?;
            let root = BitSource::new(seed);
            let s = build_from(&params_for_subspace(kind, m, p, &u, seed, rounding), &root.derive(0))?;
            let su = s.matrix().mul_dense_scaled(&u, 1.0)?;
            let sketch_spec = AugSym::new(&su, lambda)?.spectrum()?;
            let model = gaussian_model_spectrum(m, d, p, lambda, &mut root.derive(1))?;
            let mut csv = String::from("index,sketch,model\n");
            for (i, (x, y)) in sketch_spec.values().iter().zip(model.values()).enumerate() {
                writeln!(csv, "{i},{x:e},{y:e}")?;
            }
            write_csv(cfg, &csv)?;
            emit(
                cfg,
                &json!({
                    "schema": 1,
                    "check": "spectrum",
                    "kind": kind,
                    "hausdorff": hausdorff_distance(&sketch_spec, &model)?,
                    "sketch": sketch_spec.values(),
                    "model": model.values(),
                }),
            )?;
            Ok(Status::Pass)
        }
        "universality" => {
            let stats = universality_check(&UniversalityParams {
                kind: Some(kind),
                m: cfg.m.unwrap_or(64),
                n: cfg.n.unwrap_or(256),
                d: cfg.d.unwrap_or(8),
                p: cfg.p.unwrap_or(0.25),
                lambda: cfg.lambda.unwrap_or(0.0),
                trials: cfg.trials.unwrap_or(100),
                seed,
            })?;
            let mut csv = String::from("trial,hausdorff\n");
            for (t, v) in stats.distances.iter().enumerate() {
                writeln!(csv, "{t},{v:e}")?;
            }
            write_csv(cfg, &csv)?;
            emit(cfg, &json!({"schema": 1, "check": "universality", "kind": kind, "stats": stats}))?;
            Ok(if stats.pass { Status::Pass } else { Status::Below })
        }
        "bounds" => {
            let d = cfg.d.unwrap_or(16);
            let eps = cfg.eps.unwrap_or(0.5);
            let delta = cfg.delta.unwrap_or(0.1);
            if !(eps > 0.0 && eps < 1.0) {
                bail!("eps = {eps} must lie in (0, 1)");
            }
            let m = cfg.m.unwrap_or((40.0 * d as f64 / (eps * eps)).ceil() as usize);
            let spec = BoundsSpec {
                kind,
                n: cfg.n.unwrap_or(4096),
                d,
                m,
                p: cfg.p.unwrap_or(64.0 / m as f64),
                eps,
                delta,
                heavy: cfg.heavy.unwrap_or(if kind.needs_scores() { 4 } else { 0 }),
                trials: cfg.trials.unwrap_or(50),
                seed,
                rounding,
            };
            let out = singular_value_bounds_check(&spec)?;
            let mut csv = String::from("trial,smin,smax\n");
            for (t, (lo, hi)) in out.singular.iter().enumerate() {
                writeln!(csv, "{t},{lo:e},{hi:e}")?;
            }
            write_csv(cfg, &csv)?;
            let pass = out.success_fraction >= 1.0 - delta;
            emit(
                cfg,
                &json!({"schema": 1, "check": "bounds", "spec": spec, "outcome": out, "pass": pass}),
            )?;
            Ok(if pass { Status::Pass } else { Status::Below })
        }
        other => bail!("unknown check '{other}' (want moments, spectrum, universality or bounds)"),
    }
}

pub fn calibrate(cfg: &RunConfig) -> Result<Status> {
    let mut run = CalibrationRun::default();
    if let Some(t) = cfg.trials {
        run.trials = t;
    }
    if let Some(s) = cfg.seed {
        run.seed = s;
    }
    let log = run_calibration(&run)?;
    if let Some(path) = &cfg.output {
        std::fs::write(path, serde_json::to_string_pretty(&log.result)? + "\n").with_context(|| format!("writing {path}"))?;
    }
    emit(cfg, &log)?;
    Ok(Status::Pass)
}
