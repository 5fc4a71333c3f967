//! Backprojects a delta through the normal operator and overlays the
//! predicted artefact curve, for deltas at several distances from the
//! centre. Overlays are written as PGM files.
//!
//! `cargo run --release --example artifact_prediction -- [outdir]`

use std::fs::File;
use std::path::PathBuf;

use toric::artifacts::{burn_marks, closure, delta_artifact_curves, overlay_score, predict_covector};
use toric::geometry::Vec2;
use toric::grid::{write_pgm, GridSpec, Image, TraceMode};
use toric::operator::{assemble_cached, default_scan_geometry, RadiusUnits};
use toric::phantom::Phantom;
use toric::pipeline::{CURVE_SAMPLES, OVERLAY_EXCLUSION};

fn main() -> toric::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("toric-artifacts"));
    std::fs::create_dir_all(&dir)?;

    // A single covector and its two partners.
    for p in predict_covector(Vec2::new(-0.5, 0.0), Vec2::new(-1.0, 0.0))? {
        println!(
            "{}: r = {}, alpha = {:.4}, artefact at ({:.4}, {:.4})",
            p.branch.as_str(),
            p.r,
            p.alpha,
            p.partner.x,
            p.partner.y
        );
    }

    let grid = GridSpec::unit_ball(200);
    let geom = default_scan_geometry(RadiusUnits::UnitBall);
    let (op, path) = assemble_cached(&grid, &geom, TraceMode::Binary, &dir.join("cache"))?;
    println!("operator cached at {}", path.display());

    for a in [0.3, 0.6, 0.9, 0.99] {
        let x = Vec2::new(-a, 0.0);
        let (ix, iy) = grid.world_to_pixel(x * grid.unit).expect("on the grid");
        let x0 = grid.pixel_center_unit(ix, iy);
        let delta = Phantom::Delta { ix, iy }.render(&grid);
        let bp = Image::from_values(grid, op.backproject_normal(&delta.values)?)?;
        let curves = delta_artifact_curves(x0, CURVE_SAMPLES)?;
        let points = curves.points();
        let score = overlay_score(&points, &bp, x0, OVERLAY_EXCLUSION)?;
        let c = closure(&curves, 1.0);
        println!("|x0| = {a}: overlay score {score:.3}, winding {}, closed {}", c.winding, c.is_closed());
        let mut log = bp.clone();
        for v in &mut log.values {
            *v = v.max(1e-6).ln();
        }
        write_pgm(File::create(dir.join(format!("delta-{a}.pgm")))?, &log, &[])?;
        write_pgm(File::create(dir.join(format!("delta-{a}-overlay.pgm")))?, &log, &burn_marks(&grid, &points))?;
    }
    println!("wrote overlays to {}", dir.display());
    Ok(())
}
