use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use toric::analytic::analytic_sinogram;
use toric::artifacts::{burn_marks, closure, delta_artifact_curves, overlay_score, predict_covector};
use toric::fourier::{consistency_check, orders, radii_for_t};
use toric::geometry::Vec2;
use toric::grid::{read_image, write_image, write_pgm, GridSpec, Image, TraceMode};
use toric::noise::{add_noise, NoiseSpec};
use toric::operator::{
    assemble, assemble_cached, default_scan_geometry, read_sinogram, write_sinogram, BinaryScale,
    RadiusUnits, ScanGeometry, Sinogram, SparseOperator,
};
use toric::phantom::{region_mask, Phantom};
use toric::pipeline::{run_pipeline, write_curve_csv, write_residual_csv, ExperimentConfig, Metrics, OVERLAY_EXCLUSION, CURVE_SAMPLES};
use toric::solvers::{reconstruct, region_metrics, relative_error, Method, SolverConfig};

#[derive(Parser)]
#[command(name = "toric", version, about = "Toric section transform toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Units {
    UnitBall,
    Pixel,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Binary,
    Length,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Pixel,
    MeanChord,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Discrete,
    Analytic,
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Pixels per side.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Grid covers [-L, L]^2; the detector ring has radius L.
    #[arg(long, default_value_t = 1.0)]
    half_extent: f64,
}

impl GridArgs {
    fn grid(&self) -> toric::Result<GridSpec> {
        GridSpec::new(self.n, self.half_extent)
    }
}

#[derive(Args, Clone)]
struct GeomArgs {
    #[arg(long, value_enum, default_value = "unit-ball")]
    units: Units,
    /// Number of rotation angles (reference scan: 360).
    #[arg(long)]
    n_alpha: Option<usize>,
    /// Comma-separated radii in `--units` (reference scan when absent).
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
}

impl GeomArgs {
    fn units(&self) -> RadiusUnits {
        match self.units {
            Units::UnitBall => RadiusUnits::UnitBall,
            Units::Pixel => RadiusUnits::Pixel,
        }
    }

    fn geometry(&self) -> toric::Result<ScanGeometry> {
        let units = self.units();
        match (&self.radii, self.n_alpha) {
            (None, None) => Ok(default_scan_geometry(units)),
            (Some(r), a) => ScanGeometry::uniform(a.unwrap_or(360), r.clone(), units),
            (None, Some(a)) => ScanGeometry::uniform(a, default_scan_geometry(units).radii, units),
        }
    }
}

fn trace_mode(m: Mode) -> TraceMode {
    match m {
        Mode::Binary => TraceMode::Binary,
        Mode::Length => TraceMode::Length,
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Assemble the system matrix and write it as TORMAT v1.
    BuildOperator {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        geom: GeomArgs,
        #[arg(long, value_enum, default_value = "binary")]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a phantom as TORIMG v1 (and optionally PGM).
    Phantom {
        /// simple | complex | ring | delta | file:<path>
        #[arg(long, default_value = "complex")]
        kind: String,
        #[arg(long, default_value_t = -0.6, allow_hyphen_values = true)]
        delta_x: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        delta_y: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Forward-project an image (discrete) or a disk phantom (analytic).
    Sinogram {
        #[arg(value_enum)]
        source: Source,
        /// Image to project (discrete).
        #[arg(long)]
        image: Option<PathBuf>,
        /// Phantom for analytic data: simple | ring | file:<path>.
        #[arg(long)]
        phantom: Option<String>,
        /// Cached operator; assembled from the geometry flags when absent.
        #[arg(long)]
        op: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        geom: GeomArgs,
        #[arg(long, value_enum, default_value = "binary")]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add seeded relative Gaussian noise to a sinogram.
    AddNoise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct an image from a sinogram.
    Reconstruct {
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        nonneg: bool,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        op: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        half_extent: f64,
        #[arg(long)]
        out: PathBuf,
        /// Residual history CSV (default: <out>.residuals.csv).
        #[arg(long)]
        residuals: Option<PathBuf>,
    },
    /// Backproject a sinogram (A^T b) or an image through the normal operator (A^T A v).
    Backproject {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        op: PathBuf,
        /// Treat the input as an image and apply A^T A.
        #[arg(long)]
        normal: bool,
        #[arg(long, default_value_t = 1.0)]
        half_extent: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict artefacts of a point singularity (or of a covector with --xi).
    PredictArtifacts {
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
        /// Covector direction `xi_x,xi_y`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        xi: Option<Vec<f64>>,
        #[arg(long, default_value_t = CURVE_SAMPLES)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Burn the predicted curve of a delta into a backprojection image and score it.
    Overlay {
        #[arg(long)]
        backprojection: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
        #[arg(long, default_value_t = OVERLAY_EXCLUSION)]
        exclusion: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the Fourier/Abel identity between an image and its length-weighted sinogram.
    FourierCheck {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 5)]
        lmax: i32,
        #[arg(long, default_value_t = 720)]
        n_alpha: usize,
        /// Comma-separated t = |c_j| values (default 1.05 + 0.25 k, k < 16).
        #[arg(long, value_delimiter = ',')]
        t: Option<Vec<f64>>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Compare a reconstruction with the phantom it came from.
    Metrics {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Phantom whose labelled shapes define regions: simple | complex | ring | file:<path>.
        #[arg(long)]
        phantom: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic and discrete data of a disk phantom.
    CompareSinograms {
        #[arg(long)]
        analytic: PathBuf,
        #[arg(long)]
        discrete: PathBuf,
        #[arg(long, value_enum, default_value = "mean-chord")]
        binary_scale: Scale,
        #[arg(long, value_enum, default_value = "binary")]
        mode: Mode,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Run a full experiment from a key = value config.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config entry (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn phantom_from(kind: &str, delta: Option<(f64, f64)>, grid: &GridSpec) -> Result<Phantom> {
    Ok(match kind {
        "simple" => Phantom::Simple,
        "complex" => Phantom::Complex,
        "ring" => Phantom::Ring,
        "delta" => {
            let (x, y) = delta.unwrap_or((-0.6, 0.0));
            let (ix, iy) = grid
                .world_to_pixel(Vec2::new(x, y) * grid.unit)
                .ok_or_else(|| toric::Error::InvalidParameter("delta is off the grid".into()))?;
            Phantom::Delta { ix, iy }
        }
        other => match other.strip_prefix("file:") {
            Some(p) => Phantom::Custom(toric::phantom::parse_shapes(&fs::read_to_string(p)?)?),
            None => return Err(toric::Error::InvalidParameter(format!("unknown phantom '{other}'")).into()),
        },
    })
}

fn read_op(path: &Path) -> Result<SparseOperator> {
    Ok(SparseOperator::read(File::open(path).with_context(|| format!("opening {}", path.display()))?)?)
}

fn grid_for(op: &SparseOperator, half_extent: f64) -> Result<GridSpec> {
    let n = (op.n_cols() as f64).sqrt().round() as usize;
    if n * n != op.n_cols() {
        return Err(toric::Error::InvalidParameter(format!("operator has {} columns, not a square grid", op.n_cols())).into());
    }
    Ok(GridSpec::new(n, half_extent)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

fn execute(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::BuildOperator { grid, geom, mode, out } => {
            let op = assemble(&grid.grid()?, &geom.geometry()?, trace_mode(mode));
            op.write(File::create(&out)?)?;
            println!("{} rows, {} columns, {} nonzeros", op.n_rows(), op.n_cols(), op.nnz());
        }
        Cmd::Phantom { kind, delta_x, delta_y, grid, out, pgm } => {
            let g = grid.grid()?;
            let p = phantom_from(&kind, Some((delta_x, delta_y)), &g)?;
            if !matches!(p, Phantom::Delta { .. }) && !p.fits_unit_ball() {
                eprintln!("warning: phantom extends beyond the unit ball");
            }
            let img = p.render(&g);
            write_image(File::create(&out)?, &img, None)?;
            if let Some(pgm) = pgm {
                write_pgm(File::create(pgm)?, &img, &[])?;
            }
        }
        Cmd::Sinogram { source, image, phantom, op, grid, geom, mode, out } => {
            let geometry = geom.geometry()?;
            let sino = match source {
                Source::Discrete => {
                    let path = image.ok_or_else(|| toric::Error::InvalidParameter("--image is required".into()))?;
                    let img = read_image(File::open(path)?)?;
                    let op = match op {
                        Some(p) => read_op(&p)?,
                        None => assemble(&img.grid, &geometry, trace_mode(mode)),
                    };
                    Sinogram::from_values(geometry, op.apply(&img.values)?)?
                }
                Source::Analytic => {
                    let kind = phantom.ok_or_else(|| toric::Error::InvalidParameter("--phantom is required".into()))?;
                    let g = grid.grid()?;
                    let shapes = phantom_from(&kind, None, &g)?.shapes();
                    analytic_sinogram(&geometry, &shapes, g.unit)?
                }
            };
            write_sinogram(File::create(&out)?, &sino, None)?;
        }
        Cmd::AddNoise { input, epsilon, seed, out } => {
            let sino = read_sinogram(File::open(input)?, None)?;
            let noisy = add_noise(&sino, &NoiseSpec::new(epsilon, seed)?)?;
            write_sinogram(File::create(out)?, &noisy, None)?;
        }
        Cmd::Reconstruct { method, lambda, iters, nonneg, input, op, half_extent, out, residuals } => {
            let method = Method::parse(&method)?;
            let mut cfg = SolverConfig::new(method, lambda);
            if let Some(i) = iters {
                cfg.max_iters = i;
            }
            cfg.nonneg = nonneg;
            let sino = read_sinogram(File::open(input)?, None)?;
            let op = read_op(&op)?;
            let grid = grid_for(&op, half_extent)?;
            let result = reconstruct(&op, &sino.values, &cfg, &grid)?;
            write_image(File::create(&out)?, &result.image(grid)?, None)?;
            let res_path = residuals.unwrap_or_else(|| out.with_extension("residuals.csv"));
            write_residual_csv(File::create(res_path)?, &result, None)?;
            println!("{} iterations", result.iterations_used);
        }
        Cmd::Backproject { input, op, normal, half_extent, out } => {
            let op = read_op(&op)?;
            let grid = grid_for(&op, half_extent)?;
            let values = if normal {
                op.backproject_normal(&read_image(File::open(input)?)?.values)?
            } else {
                op.apply_transpose(&read_sinogram(File::open(input)?, None)?.values)?
            };
            write_image(File::create(out)?, &Image::from_values(grid, values)?, None)?;
        }
        Cmd::PredictArtifacts { x, y, xi, samples, out } => {
            let w = Vec2::new(x, y);
            match xi {
                Some(v) => {
                    if v.len() != 2 {
                        return Err(toric::Error::InvalidParameter("--xi needs two components".into()).into());
                    }
                    let mut s = String::from("branch,r,alpha,partner_x,partner_y\n");
                    for p in predict_covector(w, Vec2::new(v[0], v[1]))? {
                        s += &format!("{},{},{},{},{}\n", p.branch.as_str(), p.r, p.alpha, p.partner.x, p.partner.y);
                    }
                    write_text(&out, &s)?;
                }
                None => {
                    let curves = delta_artifact_curves(w, samples)?;
                    write_curve_csv(File::create(&out)?, &curves, None)?;
                    let c = closure(&curves, 1.0);
                    println!("{} points; winding {}; closed {}", curves.psi1.len() + curves.psi2.len(), c.winding, c.is_closed());
                }
            }
        }
        Cmd::Overlay { backprojection, x, y, exclusion, out } => {
            let bp = read_image(File::open(backprojection)?)?;
            let x0 = Vec2::new(x, y);
            let points = delta_artifact_curves(x0, CURVE_SAMPLES)?.points();
            let score = overlay_score(&points, &bp, x0, exclusion)?;
            write_pgm(File::create(out)?, &bp, &burn_marks(&bp.grid, &points))?;
            println!("overlay score {score:.4}");
        }
        Cmd::FourierCheck { image, lmax, n_alpha, t, cache, report } => {
            let img = read_image(File::open(image)?)?;
            let ts = t.unwrap_or_else(|| (0..16).map(|k| 1.05 + 0.25 * k as f64).collect());
            let geom = ScanGeometry::uniform(n_alpha, radii_for_t(&ts), RadiusUnits::UnitBall)?;
            let op = match cache {
                Some(dir) => assemble_cached(&img.grid, &geom, TraceMode::Length, &dir)?.0,
                None => assemble(&img.grid, &geom, TraceMode::Length),
            };
            let rep = consistency_check(&op, &geom, &img, &orders(lmax))?;
            write_text(&report, &rep.to_csv())?;
            for l in orders(lmax) {
                println!("l = {l}: max mismatch {:.5}", rep.max_for(l));
            }
        }
        Cmd::Metrics { image, truth, phantom, out } => {
            let img = read_image(File::open(image)?)?;
            let truth = read_image(File::open(truth)?)?;
            let mut m = Metrics::default();
            m.push("image_rel_error", relative_error(&img.values, &truth.values));
            if let Some(kind) = phantom {
                let shapes = phantom_from(&kind, None, &truth.grid)?.shapes();
                let mut labels: Vec<&str> = shapes.iter().filter_map(|s| s.label()).collect();
                labels.dedup();
                for label in labels {
                    let mask = region_mask(&shapes, label, &truth.grid)?;
                    let (true_avg, _) = region_metrics(&truth.values, &mask, 1.0)?;
                    let (avg, err) = region_metrics(&img.values, &mask, true_avg)?;
                    m.push(format!("avg_{label}"), avg);
                    m.push(format!("err_{label}_percent"), err);
                }
            }
            write_text(&out, &m.to_csv(&format!("toric {}", toric::pipeline::VERSION)))?;
        }
        Cmd::CompareSinograms { analytic, discrete, binary_scale, mode, grid } => {
            let a = read_sinogram(File::open(analytic)?, None)?;
            let d = read_sinogram(File::open(discrete)?, None)?;
            let scale = match binary_scale {
                Scale::Pixel => BinaryScale::Pixel,
                Scale::MeanChord => BinaryScale::MeanChord,
            }
            .factor(&grid.grid()?, trace_mode(mode));
            let scaled: Vec<f64> = d.values.iter().map(|v| v * scale).collect();
            if scaled.len() != a.values.len() {
                return Err(toric::Error::DimensionMismatch { expected: a.values.len(), got: scaled.len() }.into());
            }
            println!("relative error {:.5}", relative_error(&scaled, &a.values));
        }
        Cmd::Run { config, sets, out } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::from_file(&p)?,
                None => ExperimentConfig::default(),
            };
            for s in &sets {
                let (k, v) = s
                    .split_once('=')
                    .ok_or_else(|| toric::Error::InvalidParameter(format!("--set needs KEY=VALUE, got '{s}'")))?;
                cfg.set(k.trim(), v.trim())?;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let summary = run_pipeline(&cfg)?;
            for (name, value) in &summary.metrics.0 {
                println!("{name} = {value}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = match e.downcast_ref::<toric::Error>() {
                Some(t) => {
                    eprintln!("error [{}]: {e:#}", t.module());
                    if t.is_config() { 2 } else { 3 }
                }
                None => {
                    eprintln!("error: {e:#}");
                    2
                }
            };
            ExitCode::from(code)
        }
    }
}
