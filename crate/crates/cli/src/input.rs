use anyhow::{bail, Context, Result};
use sketchbench::config::RunConfig;
use sketchbench::linalg::mtx::{read_matrix_market, read_vector};
use sketchbench::linalg::{random_orthonormal, spiked_orthonormal, DenseMatrix};
use sketchbench::randbits::BitSource;

/// The design matrix from `input` or `synthetic`.
pub fn load_matrix(cfg: &RunConfig, seed: u64) -> Result<DenseMatrix> {
    match (&cfg.input, &cfg.synthetic) {
        (Some(path), None) => Ok(read_matrix_market(path).with_context(|| format!("reading {path}"))?.into_dense()),
        (None, Some(spec)) => synthetic(spec, seed),
        (Some(_), Some(_)) => bail!("give either an input file or a synthetic generator, not both"),
        (None, None) => bail!("no matrix: pass --input FILE.mtx or --synthetic KIND:n:d"),
    }
}

/// Right-hand side from `rhs`; synthetic problems get `A·1 + noise`.
pub fn load_rhs(cfg: &RunConfig, a: &DenseMatrix, seed: u64) -> Result<Vec<f64>> {
    match &cfg.rhs {
        Some(path) => {
            let b = read_vector(path).with_context(|| format!("reading {path}"))?;
            if b.len() != a.rows() {
                bail!("right-hand side has {} entries but the matrix has {} rows", b.len(), a.rows());
            }
            Ok(b)
        }
        None if cfg.synthetic.is_some() => {
            let mut src = BitSource::new(seed).derive(7);
            let mut b = a.matvec(&vec![1.0; a.cols()])?;
            b.iter_mut().for_each(|v| *v += 0.1 * src.gaussian());
            Ok(b)
        }
        None => bail!("no right-hand side: pass --rhs FILE.mtx"),
    }
}

fn synthetic(spec: &str, seed: u64) -> Result<DenseMatrix> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |i: usize| -> Result<usize> {
        parts
            .get(i)
            .with_context(|| format!("synthetic spec '{spec}' is missing field {i}"))?
            .parse()
            .with_context(|| format!("synthetic spec '{spec}': field {i} is not a count"))
    };
    let m = match parts[0] {
        "random" if parts.len() == 3 => random_orthonormal(num(1)?, num(2)?, seed)?,
        "spiked" if parts.len() == 4 => spiked_orthonormal(num(1)?, num(2)?, num(3)?, seed)?,
        "gaussian" if parts.len() == 3 => {
            let mut src = BitSource::new(seed).derive(11);
            DenseMatrix::from_fn(num(1)?, num(2)?, |_, _| src.gaussian())
        }
        _ => bail!("unknown synthetic spec '{spec}' (want random:n:d, spiked:n:d:heavy or gaussian:n:d)"),
    };
    Ok(m)
}
