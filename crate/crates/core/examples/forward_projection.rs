//! Assembles the discrete transform for the simple phantom on a small grid,
//! projects it, and writes the operator, sinogram and a viewable sinogram
//! image to a temporary directory.
//!
//! `cargo run --release --example forward_projection -- [n] [outdir]`

use std::fs::File;
use std::path::PathBuf;
use std::time::Instant;

use toric::grid::{write_image, write_pgm, GridSpec, Image, TraceMode};
use toric::operator::{assemble, default_scan_geometry, write_sinogram, RadiusUnits, Sinogram};
use toric::phantom::Phantom;

fn main() -> toric::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let dir = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("toric-forward"));
    std::fs::create_dir_all(&dir)?;

    let grid = GridSpec::unit_ball(n);
    let geom = default_scan_geometry(RadiusUnits::UnitBall);
    for mode in [TraceMode::Binary, TraceMode::Length] {
        let t = Instant::now();
        let op = assemble(&grid, &geom, mode);
        println!("{mode:?}: {} x {}, {} nonzeros, assembled in {:.2?}", op.n_rows(), op.n_cols(), op.nnz(), t.elapsed());

        let phantom = Phantom::Simple.render(&grid);
        let t = Instant::now();
        let b = op.apply(&phantom.values)?;
        println!("  A v in {:.2?}, max {:.3}", t.elapsed(), b.iter().cloned().fold(0.0, f64::max));

        let sino = Sinogram::from_values(geom.clone(), b)?;
        let tag = mode.as_str();
        write_sinogram(File::create(dir.join(format!("simple-{tag}.torsin")))?, &sino, None)?;
        op.write(File::create(dir.join(format!("op-{tag}.tormat")))?)?;

        // Sinogram as a picture: one row per radius, one column per angle.
        let (nr, na) = (geom.radii.len(), geom.alphas.len());
        let side = nr.max(na);
        let mut pic = Image::zeros(GridSpec::new(side, 1.0)?);
        for i in 0..nr {
            for j in 0..na {
                pic.set(j, side - 1 - i, sino.get(i, j));
            }
        }
        write_pgm(File::create(dir.join(format!("simple-{tag}-sinogram.pgm")))?, &pic, &[])?;
        write_image(File::create(dir.join("simple.torimg"))?, &phantom, None)?;
    }
    println!("wrote files to {}", dir.display());
    Ok(())
}
