use std::path::Path;
use std::process::{Command, Output};

use toric::grid::read_image;
use toric::operator::{read_sinogram, SparseOperator};

fn toric(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toric"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const GEOM: [&str; 4] = ["--n-alpha", "48", "--radii", "2.05,2.3,3,4,8"];

#[test]
fn file_based_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&toric(d, &["phantom", "--kind", "simple", "--n", "32", "--out", "p.torimg", "--pgm", "p.pgm"]));
    let mut args = vec!["build-operator", "--n", "32", "--out", "op.tormat"];
    args.extend(GEOM);
    ok(&toric(d, &args));
    let op = SparseOperator::read(std::fs::File::open(d.join("op.tormat")).unwrap()).unwrap();
    assert_eq!((op.n_rows(), op.n_cols()), (240, 1024));

    let mut args = vec!["sinogram", "discrete", "--image", "p.torimg", "--op", "op.tormat", "--out", "s.torsin"];
    args.extend(GEOM);
    ok(&toric(d, &args));
    ok(&toric(d, &["add-noise", "--in", "s.torsin", "--epsilon", "0.01", "--seed", "2", "--out", "n.torsin"]));
    let s = read_sinogram(std::fs::File::open(d.join("s.torsin")).unwrap(), None).unwrap();
    let n = read_sinogram(std::fs::File::open(d.join("n.torsin")).unwrap(), None).unwrap();
    assert_eq!(s.geom, n.geom);
    assert_ne!(s.values, n.values);

    let out = ok(&toric(
        d,
        &["reconstruct", "--method", "cgls", "--lambda", "0.5", "--iters", "20", "--nonneg", "--in", "n.torsin", "--op", "op.tormat", "--out", "r.torimg", "--residuals", "r.csv"],
    ));
    assert!(out.contains("iterations"));
    let r = read_image(std::fs::File::open(d.join("r.torimg")).unwrap()).unwrap();
    assert!(r.values.iter().all(|&v| v >= 0.0));
    let csv = std::fs::read_to_string(d.join("r.csv")).unwrap();
    assert!(csv.starts_with("iteration,residual,objective\n"));

    ok(&toric(d, &["backproject", "--in", "s.torsin", "--op", "op.tormat", "--out", "bp.torimg"]));
    ok(&toric(d, &["backproject", "--in", "p.torimg", "--normal", "--op", "op.tormat", "--out", "nbp.torimg"]));
    ok(&toric(d, &["metrics", "--image", "r.torimg", "--truth", "p.torimg", "--out", "m.csv"]));
    let m = std::fs::read_to_string(d.join("m.csv")).unwrap();
    assert!(m.lines().any(|l| l == "name,value"));
    assert!(m.contains("image_rel_error,"));
}

#[test]
fn analytic_data_and_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&toric(d, &["phantom", "--kind", "ring", "--n", "48", "--out", "ring.torimg"]));
    let mut a = vec!["sinogram", "analytic", "--phantom", "ring", "--n", "48", "--out", "a.torsin"];
    a.extend(GEOM);
    ok(&toric(d, &a));
    let mut b = vec!["sinogram", "discrete", "--image", "ring.torimg", "--mode", "length", "--out", "d.torsin"];
    b.extend(GEOM);
    ok(&toric(d, &b));
    let out = ok(&toric(d, &["compare-sinograms", "--analytic", "a.torsin", "--discrete", "d.torsin", "--mode", "length", "--n", "48"]));
    let err: f64 = out.trim().rsplit(' ').next().unwrap().parse().unwrap();
    assert!(err < 0.2, "{out}");
}

#[test]
fn artifact_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = ok(&toric(d, &["predict-artifacts", "--x", "-0.99", "--y", "0", "--out", "c.csv"]));
    assert!(out.contains("closed true"), "{out}");
    let csv = std::fs::read_to_string(d.join("c.csv")).unwrap();
    assert!(csv.starts_with("branch,alpha,r,x,y\n"));
    ok(&toric(d, &["predict-artifacts", "--x", "-0.5", "--y", "0", "--xi", "-1,0", "--out", "p.csv"]));
    let p = std::fs::read_to_string(d.join("p.csv")).unwrap();
    assert_eq!(p.lines().count(), 3);
    assert!(p.lines().nth(1).unwrap().contains(",3.25,"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    // Config errors.
    assert_eq!(toric(d, &["reconstruct", "--method", "nope", "--in", "x", "--op", "y", "--out", "z"]).status.code(), Some(2));
    assert_eq!(toric(d, &["add-noise", "--in", "missing.torsin", "--epsilon", "0.1", "--out", "o"]).status.code(), Some(2));
    assert_eq!(toric(d, &["run", "--set", "frobnicate=1"]).status.code(), Some(2));
    assert_eq!(toric(d, &["no-such-command"]).status.code(), Some(2));
    // Numeric failures.
    let out = toric(d, &["predict-artifacts", "--x", "0", "--y", "0", "--out", "o.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[artifacts]"));
    let out = toric(d, &["predict-artifacts", "--x", "0.5", "--y", "0", "--xi", "0,1", "--out", "o.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn run_writes_tagged_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("exp.cfg"),
        "n = 40\nn_alpha = 60\nradii = 2.05,2.3,3,4,8\nphantom = ring\ndata = analytic\nmode = length\nnoise = 0.01\nseed = 9\nmethod = cgls\nlambda = 0.1\niters = 10\n",
    )
    .unwrap();
    let out = ok(&toric(d, &["run", "--config", "exp.cfg", "--set", "seed=10", "--out", "res"]));
    assert!(out.contains("sinogram_rel_error"));
    for f in ["phantom.torimg", "analytic.torsin", "sinogram.torsin", "noisy.torsin", "reconstruction.torimg", "residuals.csv", "metrics.csv"] {
        let text = std::fs::read_to_string(d.join("res").join(f)).unwrap();
        let tagged = text.lines().take(2).any(|l| l.starts_with("# toric ") && l.contains(" config "));
        assert!(tagged, "{f} lacks provenance");
    }
}
