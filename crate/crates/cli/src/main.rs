mod commands;
mod input;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sketchbench::config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "sketchbench", version, about = "Sparse subspace embeddings and sketched least squares")]
struct Cli {
    /// Random seed. Flags and the environment beat the config file.
    #[arg(long, global = true, env = "SKETCHBENCH_SEED")]
    seed: Option<u64>,
    /// Flat `key = value` or JSON config; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw one sparse sketch, save it, and optionally embed an input.
    Sketch(Opts),
    /// Four-stage constant-distortion embedding.
    OseChain(Opts),
    /// Two-pass low-distortion embedding.
    LowDistortion(Opts),
    /// Reduce a regression problem to a small one.
    Reduce(Opts),
    /// Least squares by sketch-and-solve and preconditioned SGD.
    Lsq(Opts),
    /// Statistical checks: moments, spectrum, universality, bounds.
    Verify(Opts),
    /// Grid search for the calibrated constants.
    Calibrate(Opts),
}

/// Every flag mirrors a config key of the same name.
#[derive(Args, Debug, Default)]
struct Opts {
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    rhs: Option<String>,
    #[arg(long)]
    scores: Option<String>,
    /// `random:n:d`, `spiked:n:d:heavy` or `gaussian:n:d`.
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    report: Option<String>,
    #[arg(long)]
    csv: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long)]
    m2: Option<usize>,
    #[arg(long)]
    m3: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// `single-pass` or `sgd`.
    #[arg(long)]
    mode: Option<String>,
    /// Step base: `eighth` (k/8) or `quarter` (k/4).
    #[arg(long)]
    variant: Option<String>,
    /// `moments`, `spectrum`, `universality` or `bounds`.
    #[arg(long)]
    check: Option<String>,
    /// `reject` or `up`.
    #[arg(long)]
    rounding: Option<String>,
    #[arg(long)]
    heavy: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    lowbits: bool,
}

impl Opts {
    fn into_config(self, seed: Option<u64>, threads: Option<usize>) -> RunConfig {
        RunConfig {
            input: self.input,
            rhs: self.rhs,
            scores: self.scores,
            synthetic: self.synthetic,
            output: self.output,
            report: self.report,
            csv: self.csv,
            seed,
            trials: self.trials,
            threads,
            kind: self.kind,
            m: self.m,
            n: self.n,
            d: self.d,
            p: self.p,
            eps: self.eps,
            delta: self.delta,
            theta: self.theta,
            gamma: self.gamma,
            m1: self.m1,
            m2: self.m2,
            m3: self.m3,
            lambda: self.lambda,
            batch: self.batch,
            iters: self.iters,
            alpha: self.alpha,
            mode: self.mode,
            variant: self.variant,
            check: self.check,
            rounding: self.rounding,
            heavy: self.heavy,
            tolerance: self.tolerance,
            lowbits: self.lowbits.then_some(true),
        }
    }
}

/// Outcome of a successful run.
pub enum Status {
    Pass,
    /// An acceptance threshold was missed (exit code 2).
    Below,
}

fn run(cli: Cli) -> Result<Status> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in config {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    let (name, opts) = match cli.command {
        Command::Sketch(o) => ("sketch", o),
        Command::OseChain(o) => ("ose-chain", o),
        Command::LowDistortion(o) => ("low-distortion", o),
        Command::Reduce(o) => ("reduce", o),
        Command::Lsq(o) => ("lsq", o),
        Command::Verify(o) => ("verify", o),
        Command::Calibrate(o) => ("calibrate", o),
    };
    let cfg = opts.into_config(cli.seed, cli.threads).or(file);
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match name {
        "sketch" => commands::sketch(&cfg),
        "ose-chain" => commands::ose_chain(&cfg),
        "low-distortion" => commands::low_distortion(&cfg),
        "reduce" => commands::reduce(&cfg),
        "lsq" => commands::lsq(&cfg),
        "verify" => commands::verify(&cfg),
        _ => commands::calibrate(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::Below) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
