use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sketchbench"));
    c.env_remove("SKETCHBENCH_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn sketchbench")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn strip_timing(mut v: Value) -> Value {
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timing");
    }
    v
}

/// Rows (i, j) with a smooth, well-conditioned pattern; b = A·1 + small wiggle.
fn write_problem(dir: &Path, n: usize, d: usize) -> (String, String) {
    let mut a = format!("%%MatrixMarket matrix array real general\n{n} {d}\n");
    let mut b = format!("%%MatrixMarket matrix array real general\n{n} 1\n");
    let entry = |i: usize, j: usize| ((i * (2 * j + 3) + j * j) % 17) as f64 / 17.0 - 0.5 + if i % d == j { 1.0 } else { 0.0 };
    // Array format is column major.
    for j in 0..d {
        for i in 0..n {
            a += &format!("{}\n", entry(i, j));
        }
    }
    for i in 0..n {
        let row: f64 = (0..d).map(|j| entry(i, j)).sum();
        b += &format!("{}\n", row + 0.05 * ((i % 7) as f64 - 3.0));
    }
    let (pa, pb) = (dir.join("a.mtx"), dir.join("b.mtx"));
    std::fs::write(&pa, a).unwrap();
    std::fs::write(&pb, b).unwrap();
    (pa.to_string_lossy().into_owned(), pb.to_string_lossy().into_owned())
}

#[test]
fn moments_ind_diag_reports_stats() {
    let out = run(&["verify", "--check", "moments", "--kind", "ind-diag", "--seed", "7"]);
    let v = json_of(&out);
    for key in ["max_abs_mean", "max_var_dev", "max_abs_cov"] {
        assert!(v[key].as_f64().unwrap() < 0.03, "{key} = {}", v[key]);
    }
    assert_eq!(v["builds"], 20_000);
    let code = if v["pass"].as_bool().unwrap() { 0 } else { 2 };
    assert_eq!(out.status.code(), Some(code));
}

#[test]
fn moments_ind_diag_passes_at_seed_zero() {
    let out = run(&["verify", "--check", "moments", "--kind", "ind-diag", "--seed", "0"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn missing_input_is_an_error() {
    let out = run(&["ose-chain", "--input", "/definitely/not/here.mtx"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error:") && err.contains("here.mtx"), "{err}");
}

#[test]
fn unknown_subcommand_flag_and_bad_kind() {
    assert_ne!(run(&["sketch", "--colour", "red"]).status.code(), Some(0));
    let out = run(&["sketch", "--kind", "gaussian-ish", "--m", "4", "--n", "16", "--p", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn lsq_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = write_problem(dir.path(), 2048, 4);
    let csv = dir.path().join("trace.csv");
    let report = dir.path().join("lsq.json");
    let out = run(&[
        "lsq",
        "--input",
        &a,
        "--rhs",
        &b,
        "--eps",
        "0.5",
        "--seed",
        "3",
        "--csv",
        csv.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(&csv).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("t,f,eta"));
    // The final iterate has no step size.
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.len() > 10);
    let (last, steps) = rows.split_last().unwrap();
    assert!(last.len() == 3 && last[2].is_empty());
    for r in steps {
        assert_eq!(r.len(), 3);
        assert!(r[1].parse::<f64>().unwrap() >= 0.0 && r[2].parse::<f64>().unwrap() > 0.0);
    }
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let (f, f_star) = (v["f"].as_f64().unwrap(), v["f_star"].as_f64().unwrap());
    assert!(f >= f_star * (1.0 - 1e-9) && f <= 1.5 * f_star, "f {f} vs f* {f_star}");
    assert_eq!(v["x"].as_array().unwrap().len(), 4);
}

#[test]
fn single_pass_mode_has_no_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = write_problem(dir.path(), 1024, 3);
    let csv = dir.path().join("none.csv");
    let out = run(&[
        "lsq",
        "--input",
        &a,
        "--rhs",
        &b,
        "--mode",
        "single-pass",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!csv.exists());
    assert_eq!(json_of(&out)["iters"], 0);
}

#[test]
fn reports_do_not_depend_on_threads() {
    let args = |t: &'static str| ["--threads", t, "ose-chain", "--synthetic", "spiked:4096:8:3", "--seed", "11"];
    let one = strip_timing(json_of(&run(&args("1"))));
    let four = strip_timing(json_of(&run(&args("4"))));
    assert_eq!(one, four);
    let lowbits = strip_timing(json_of(&run(&[
        "ose-chain",
        "--synthetic",
        "spiked:4096:8:3",
        "--seed",
        "11",
        "--lowbits",
    ])));
    assert_eq!(lowbits["stages"].as_array().unwrap().len(), one["stages"].as_array().unwrap().len());
    assert!(lowbits["bits_used"].as_u64().unwrap() < one["bits_used"].as_u64().unwrap());
}

#[test]
fn flags_and_env_beat_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# low-distortion run\nsynthetic = random:2048:4\nseed = 5\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_file = strip_timing(json_of(&run(&["--config", cfg, "low-distortion"])));
    let flag = strip_timing(json_of(&run(&["--config", cfg, "low-distortion", "--seed", "6"])));
    let env = bin()
        .args(["--config", cfg, "low-distortion"])
        .env("SKETCHBENCH_SEED", "6")
        .output()
        .unwrap();
    let explicit = strip_timing(json_of(&run(&["low-distortion", "--synthetic", "random:2048:4", "--seed", "5"])));
    assert_eq!(from_file, explicit);
    assert_ne!(from_file, flag);
    assert_eq!(strip_timing(json_of(&env)), flag);
}

#[test]
fn config_errors_carry_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "seed = 1\nsynthetic = random:64:2\n  colour = red\n").unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "ose-chain"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn sketch_round_trip_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.mtx");
    let out = run(&[
        "sketch",
        "--kind",
        "osnap-ind-col",
        "--m",
        "32",
        "--n",
        "256",
        "--p",
        "0.125",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let side: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.mtx.json")).unwrap()).unwrap();
    assert_eq!(json_of(&out), side);
    let head = std::fs::read_to_string(&path).unwrap();
    assert!(head.starts_with("%%MatrixMarket matrix coordinate"));
}

#[test]
fn reduce_writes_both_halves() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("red.mtx");
    let out = run(&["reduce", "--synthetic", "gaussian:4096:6", "--output", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(path.exists() && dir.path().join("red.mtx.rhs.mtx").exists());
    assert!(json_of(&out)["kappa"].as_f64().unwrap() < 3.0);
}
