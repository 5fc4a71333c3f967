//! Checks the Fourier/Abel identity linking angular Fourier coefficients of
//! the sinogram to those of the image, for a smooth off-centre phantom and
//! a radial annulus.
//!
//! `cargo run --release --example fourier_consistency`

use toric::fourier::{consistency_check, mollified_annulus, mollified_bumps, radii_for_t};
use toric::geometry::Vec2;
use toric::grid::{GridSpec, Image, TraceMode};
use toric::operator::{assemble, RadiusUnits, ScanGeometry};

fn main() -> toric::Result<()> {
    let grid = GridSpec::unit_ball(200);
    let ts: Vec<f64> = (0..16).map(|k| 1.05 + 0.25 * k as f64).collect();
    let geom = ScanGeometry::uniform(720, radii_for_t(&ts), RadiusUnits::UnitBall)?;
    let op = assemble(&grid, &geom, TraceMode::Length);

    let cases: [(&str, fn(Vec2) -> f64, &[i32]); 2] =
        [("bumps", mollified_bumps, &[0, 1, 2, 5]), ("annulus", mollified_annulus, &[0])];
    for (name, f, orders) in cases {
        let mut img = Image::zeros(grid);
        for iy in 0..grid.n {
            for ix in 0..grid.n {
                img.set(ix, iy, f(grid.pixel_center_unit(ix, iy)));
            }
        }
        let report = consistency_check(&op, &geom, &img, orders)?;
        for &l in orders {
            println!("{name:<8} l = {l}: max relative mismatch {:.5}", report.max_for(l));
        }
    }
    Ok(())
}
