//! Reconstructs the complex phantom from noisy data with Landweber,
//! CGLS + Tikhonov and heuristic TV, and reports region averages over the
//! triangle (true value 3) and cross (true value 4).
//!
//! `cargo run --release --example reconstruction -- [noise] [n]`

use std::time::Instant;

use toric::grid::{GridSpec, TraceMode};
use toric::noise::{add_noise_vec, NoiseSpec};
use toric::operator::{assemble_cached, default_scan_geometry, RadiusUnits};
use toric::phantom::{region_mask, Phantom};
use toric::solvers::{reconstruct, region_metrics, relative_error, Method, SolverConfig};

fn main() -> toric::Result<()> {
    let mut args = std::env::args().skip(1);
    let eps: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);

    let grid = GridSpec::unit_ball(n);
    let geom = default_scan_geometry(RadiusUnits::UnitBall);
    let cache = std::env::temp_dir().join("toric-cache");
    let (op, _) = assemble_cached(&grid, &geom, TraceMode::Binary, &cache)?;
    let shapes = Phantom::Complex.shapes();
    let truth = Phantom::Complex.render(&grid);
    let b = add_noise_vec(&op.apply(&truth.values)?, &NoiseSpec::new(eps, 1)?)?;
    let tri = region_mask(&shapes, "T", &grid)?;
    let cross = region_mask(&shapes, "C", &grid)?;

    let runs = [
        (Method::Landweber, 0.0),
        (Method::CglsTikhonov, if eps > 0.02 { 28.0 } else { 7.0 }),
        (Method::Htv, if eps > 0.02 { 30.0 } else { 10.0 }),
    ];
    println!("noise {eps}, grid {n} x {n}");
    for (method, lambda) in runs {
        let mut cfg = SolverConfig::new(method, lambda);
        if method == Method::Landweber {
            cfg.max_iters = 100;
        }
        let t = Instant::now();
        let res = reconstruct(&op, &b, &cfg, &grid)?;
        let (avg_t, err_t) = region_metrics(&res.solution, &tri, 3.0)?;
        let (avg_c, err_c) = region_metrics(&res.solution, &cross, 4.0)?;
        println!(
            "{:<14} lambda {:>5}: avgT {avg_t:.3} (errT {err_t:5.2}%)  avgC {avg_c:.3} (errC {err_c:5.2}%)  image error {:.4}  {} iterations, {:.1?}",
            method.as_str(),
            lambda,
            relative_error(&res.solution, &truth.values),
            res.iterations_used,
            t.elapsed()
        );
    }
    Ok(())
}
