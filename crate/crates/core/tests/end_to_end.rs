use nalgebra::{DMatrix, DVector};
use sketchbench::leverage::{exact_scores, load_scores, save_scores};
use sketchbench::linalg::mtx::{read_matrix_market, read_vector, write_matrix_market, MtxMatrix};
use sketchbench::linalg::{random_orthonormal, DenseMatrix};
use sketchbench::pipeline::{fast_low_distortion, fast_ose_chain, reduce_regression, EmbeddingSpec, StageDims};
use sketchbench::randbits::BitSource;
use sketchbench::regression::objective;
use sketchbench::sketch::{build_from, load_sketch, save_sketch, SketchKind, SketchParams};
use std::path::PathBuf;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sketchbench-e2e-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn gaussian(n: usize, d: usize, seed: u64) -> DenseMatrix {
    let mut src = BitSource::new(seed);
    DenseMatrix::from_fn(n, d, |_, _| src.gaussian())
}

/// Least squares through nalgebra's SVD, independent of the crate's solvers.
fn svd_lstsq(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let m = DMatrix::from_row_slice(a.rows(), a.cols(), a.data());
    m.svd(true, true)
        .solve(&DVector::from_column_slice(b), 1e-12)
        .unwrap()
        .iter()
        .copied()
        .collect()
}

#[test]
fn matrix_market_files_round_trip() {
    let a = gaussian(37, 5, 1);
    let path = scratch("a.mtx");
    write_matrix_market(&path, &MtxMatrix::Dense(a.clone())).unwrap();
    assert_eq!(read_matrix_market(&path).unwrap().into_dense(), a);

    let col = DenseMatrix::column_vector(&[1.5, -2.0, 0.25]);
    let path = scratch("b.mtx");
    write_matrix_market(&path, &MtxMatrix::Dense(col)).unwrap();
    assert_eq!(read_vector(&path).unwrap(), vec![1.5, -2.0, 0.25]);
}

#[test]
fn sketch_and_scores_files_round_trip() {
    let u = random_orthonormal(128, 4, 3).unwrap();
    let scores = exact_scores(&u).unwrap();
    let (bin, json) = (scratch("l.bin"), scratch("l.json"));
    save_scores(&scores, &bin, &json).unwrap();
    let back = load_scores(&bin, &json).unwrap();
    assert_eq!(back.scores(), scores.scores());

    let params = SketchParams::new(SketchKind::LessIndRows, 16, 128, 0.25, 9).with_scores(back);
    let s = build_from(&params, &BitSource::new(9)).unwrap();
    let (mtx, car) = (scratch("s.mtx"), scratch("s.json"));
    save_sketch(&s, &mtx, &car).unwrap();
    let loaded = load_sketch(&mtx, &car).unwrap();
    assert_eq!(loaded.matrix(), s.matrix());
    assert_eq!(loaded.kind(), SketchKind::LessIndRows);
    assert_eq!(loaded.apply(&u).unwrap(), s.apply(&u).unwrap());
}

#[test]
fn default_chain_dims_at_8192_by_16() {
    // Worked by hand: m3 = 12·16, m2 = 8·16·4, m1 = 16·⌈16^1.25·4⌉,
    // s1 = 1/γ, s2 = log2 16, pm3 = ⌈0.02·log2(160)^4⌉ = ⌈57.48⌉.
    let dims = EmbeddingSpec::new(8192, 16).resolve().unwrap();
    assert_eq!(
        dims,
        StageDims {
            m1: 2048,
            m2: 512,
            m3: 192,
            s1: 4,
            s2: 4,
            pm3: 58
        }
    );
}

#[test]
fn chain_embeds_a_tall_gaussian() {
    let a = gaussian(8192, 16, 4);
    let spec = EmbeddingSpec::new(8192, 16);
    let (sa, report, chain) = fast_ose_chain(&a, &spec, 4).unwrap();
    assert_eq!(sa.shape(), (chain.dims().m3, 16));
    assert!(report.smin >= 0.5 && report.smax <= 2.0, "{report:?}");
    assert_eq!(report.stages.len(), 4);
}

#[test]
fn low_distortion_meets_eps() {
    let a = gaussian(4096, 8, 5);
    let mut spec = EmbeddingSpec::new(4096, 8);
    spec.eps = 0.5;
    let out = fast_low_distortion(&a, &spec, 5).unwrap();
    assert!(out.report.eps_value() <= 0.5, "{:?}", out.report);
    assert_eq!(out.scores.len(), 4096);
}

#[test]
fn reduced_problem_is_nearly_optimal() {
    let (n, d) = (4096, 6);
    let a = gaussian(n, d, 6);
    let mut src = BitSource::new(60);
    let b: Vec<f64> = a
        .matvec(&[1.0, -1.0, 2.0, 0.5, 0.0, 3.0])
        .unwrap()
        .into_iter()
        .map(|v| v + src.gaussian())
        .collect();
    let spec = EmbeddingSpec::new(n, d + 1);
    let (ar, br, _) = reduce_regression(&a, &b, &spec, 6).unwrap();
    let x_sketch = svd_lstsq(&ar, &br);
    let x_star = svd_lstsq(&a, &b);
    let ratio = objective(&a, &b, &x_sketch).unwrap() / objective(&a, &b, &x_star).unwrap();
    assert!((1.0..=1.25).contains(&ratio), "ratio {ratio}");
}
