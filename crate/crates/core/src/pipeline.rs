//! Config-driven experiment runs: phantom, data, noise, reconstruction and
//! artefact overlays written to one output directory.
//!
//! Configs are flat `key = value` text with `#` comments. Every text output
//! starts with a provenance comment carrying the crate version and a hash of
//! the config (output and cache directories excluded), so two runs of the
//! same config produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::analytic::analytic_sinogram;
use crate::artifacts::{burn_marks, closure, delta_artifact_curves, overlay_score};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid::{write_image, write_pgm, GridSpec, Image, TraceMode};
use crate::noise::{add_noise, realized_level, NoiseSpec};
use crate::operator::{
    assemble_cached, default_scan_geometry, write_sinogram, BinaryScale, RadiusUnits, ScanGeometry,
    Sinogram, SparseOperator,
};
use crate::phantom::{parse_shapes, region_mask, render_shapes_averaged, Phantom, Shape};
use crate::solvers::{reconstruct, region_metrics, relative_error, Method, ReconResult, SolverConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exclusion radius around the delta when scoring overlays, in detector-ring units.
pub const OVERLAY_EXCLUSION: f64 = 0.1;
/// Samples per branch of the predicted artefact curve.
pub const CURVE_SAMPLES: usize = 720;

#[derive(Debug, Clone, PartialEq)]
pub enum PhantomChoice {
    Simple,
    Complex,
    Ring,
    /// A pixel delta at the given point (detector-ring units).
    Delta(Vec2),
    /// Shapes loaded from a table file.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Discrete,
    Analytic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub half_extent: f64,
    pub units: RadiusUnits,
    /// `None` selects the reference 360 x 199 scan.
    pub n_alpha: Option<usize>,
    pub radii: Option<Vec<f64>>,
    pub mode: TraceMode,
    pub binary_scale: BinaryScale,
    pub phantom: PhantomChoice,
    pub data: DataSource,
    pub noise: f64,
    pub seed: u64,
    /// `None` skips reconstruction.
    pub method: Option<Method>,
    pub lambda: f64,
    pub iters: Option<usize>,
    pub nonneg: Option<bool>,
    pub out_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 200,
            half_extent: 1.0,
            units: RadiusUnits::UnitBall,
            n_alpha: None,
            radii: None,
            mode: TraceMode::Binary,
            binary_scale: BinaryScale::MeanChord,
            phantom: PhantomChoice::Complex,
            data: DataSource::Discrete,
            noise: 0.0,
            seed: 0,
            method: Some(Method::CglsTikhonov),
            lambda: 0.0,
            iters: None,
            nonneg: None,
            out_dir: PathBuf::from("out"),
            cache_dir: None,
        }
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::InvalidParameter(format!("bad value '{value}' for '{key}'"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => self.n = num(key, value)?,
            "half_extent" => self.half_extent = num(key, value)?,
            "units" => {
                self.units = match value {
                    "unit-ball" => RadiusUnits::UnitBall,
                    "pixel" => RadiusUnits::Pixel,
                    _ => return Err(bad(key, value)),
                }
            }
            "geometry" => match value {
                "default" => {
                    self.n_alpha = None;
                    self.radii = None;
                }
                _ => return Err(bad(key, value)),
            },
            "n_alpha" => self.n_alpha = Some(num(key, value)?),
            "radii" => {
                self.radii = Some(
                    value
                        .split(',')
                        .map(|s| num(key, s.trim()))
                        .collect::<Result<Vec<f64>>>()?,
                )
            }
            "mode" => self.mode = TraceMode::parse(value)?,
            "binary_scale" => self.binary_scale = BinaryScale::parse(value)?,
            "phantom" => {
                self.phantom = match value {
                    "simple" => PhantomChoice::Simple,
                    "complex" => PhantomChoice::Complex,
                    "ring" => PhantomChoice::Ring,
                    "delta" => match self.phantom {
                        PhantomChoice::Delta(p) => PhantomChoice::Delta(p),
                        _ => PhantomChoice::Delta(Vec2::new(-0.6, 0.0)),
                    },
                    v => match v.strip_prefix("file:") {
                        Some(p) => PhantomChoice::File(PathBuf::from(p)),
                        None => return Err(bad(key, value)),
                    },
                }
            }
            "delta_x" | "delta_y" => {
                let c: f64 = num(key, value)?;
                let mut p = match self.phantom {
                    PhantomChoice::Delta(p) => p,
                    _ => Vec2::new(-0.6, 0.0),
                };
                if key == "delta_x" {
                    p.x = c;
                } else {
                    p.y = c;
                }
                self.phantom = PhantomChoice::Delta(p);
            }
            "data" => {
                self.data = match value {
                    "discrete" => DataSource::Discrete,
                    "analytic" => DataSource::Analytic,
                    _ => return Err(bad(key, value)),
                }
            }
            "noise" => self.noise = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "method" => self.method = if value == "none" { None } else { Some(Method::parse(value)?) },
            "lambda" => self.lambda = num(key, value)?,
            "iters" => self.iters = Some(num(key, value)?),
            "nonneg" => self.nonneg = Some(num(key, value)?),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "cache_dir" => self.cache_dir = Some(PathBuf::from(value)),
            _ => return Err(Error::InvalidParameter(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Canonical `key = value` form of every setting that affects results.
    pub fn canonical(&self) -> String {
        let mut m = BTreeMap::new();
        m.insert("n", self.n.to_string());
        m.insert("half_extent", self.half_extent.to_string());
        m.insert(
            "units",
            match self.units {
                RadiusUnits::UnitBall => "unit-ball",
                RadiusUnits::Pixel => "pixel",
            }
            .to_string(),
        );
        if let Some(a) = self.n_alpha {
            m.insert("n_alpha", a.to_string());
        }
        if let Some(r) = &self.radii {
            m.insert("radii", r.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        }
        m.insert("mode", self.mode.as_str().to_string());
        m.insert("binary_scale", self.binary_scale.as_str().to_string());
        let phantom = match &self.phantom {
            PhantomChoice::Simple => "simple".to_string(),
            PhantomChoice::Complex => "complex".to_string(),
            PhantomChoice::Ring => "ring".to_string(),
            PhantomChoice::Delta(p) => {
                m.insert("delta_x", p.x.to_string());
                m.insert("delta_y", p.y.to_string());
                "delta".to_string()
            }
            PhantomChoice::File(p) => format!("file:{}", p.display()),
        };
        m.insert("phantom", phantom);
        m.insert(
            "data",
            match self.data {
                DataSource::Discrete => "discrete",
                DataSource::Analytic => "analytic",
            }
            .to_string(),
        );
        m.insert("noise", self.noise.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("method", self.method.map_or("none", Method::as_str).to_string());
        m.insert("lambda", self.lambda.to_string());
        if let Some(i) = self.iters {
            m.insert("iters", i.to_string());
        }
        if let Some(b) = self.nonneg {
            m.insert("nonneg", b.to_string());
        }
        m.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k} = {v}");
            s
        })
    }

    /// First 16 hex digits of the SHA-256 of `canonical()`.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn provenance(&self) -> String {
        format!("toric {VERSION} config {}", self.hash())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.n, self.half_extent)
    }

    pub fn geometry(&self) -> Result<ScanGeometry> {
        match (&self.radii, self.n_alpha) {
            (None, None) => Ok(default_scan_geometry(self.units)),
            (Some(r), a) => ScanGeometry::uniform(a.unwrap_or(360), r.clone(), self.units),
            (None, Some(a)) => {
                let reference = default_scan_geometry(self.units);
                ScanGeometry::uniform(a, reference.radii, self.units)
            }
        }
    }

    pub fn solver(&self) -> Option<SolverConfig> {
        self.method.map(|m| {
            let mut cfg = SolverConfig::new(m, self.lambda);
            if let Some(i) = self.iters {
                cfg.max_iters = i;
            }
            if let Some(b) = self.nonneg {
                cfg.nonneg = b;
            }
            cfg
        })
    }

    pub fn shapes(&self) -> Result<Vec<Shape>> {
        Ok(match &self.phantom {
            PhantomChoice::Simple => Phantom::Simple.shapes(),
            PhantomChoice::Complex => Phantom::Complex.shapes(),
            PhantomChoice::Ring => Phantom::Ring.shapes(),
            PhantomChoice::Delta(_) => Vec::new(),
            PhantomChoice::File(p) => parse_shapes(&fs::read_to_string(p)?)?,
        })
    }

    /// The delta's pixel and its centre (detector-ring units).
    pub fn delta_pixel(&self, grid: &GridSpec) -> Result<Option<((usize, usize), Vec2)>> {
        let PhantomChoice::Delta(p) = self.phantom else { return Ok(None) };
        let (ix, iy) = grid
            .world_to_pixel(p * grid.unit)
            .ok_or_else(|| Error::InvalidParameter(format!("delta ({}, {}) is off the grid", p.x, p.y)))?;
        Ok(Some(((ix, iy), grid.pixel_center_unit(ix, iy))))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || !(self.half_extent > 0.0) {
            return Err(Error::InvalidParameter("grid needs n > 0 and half_extent > 0".into()));
        }
        NoiseSpec::new(self.noise, self.seed)?;
        if let PhantomChoice::File(p) = &self.phantom {
            if !p.exists() {
                return Err(Error::InvalidParameter(format!("phantom file {} does not exist", p.display())));
            }
        }
        if self.data == DataSource::Analytic && matches!(self.phantom, PhantomChoice::Delta(_)) {
            return Err(Error::UnsupportedShape("pixel delta".into()));
        }
        if let Some(s) = self.solver() {
            s.validate()?;
        }
        self.geometry()?;
        Ok(())
    }
}

/// Name/value rows written as `metrics.csv`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics(pub Vec<(String, f64)>);

impl Metrics {
    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.0.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn to_csv(&self, provenance: &str) -> String {
        let mut s = format!("# {provenance}\nname,value\n");
        for (n, v) in &self.0 {
            let _ = writeln!(s, "{n},{v}");
        }
        s
    }
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub metrics: Metrics,
    pub files: Vec<PathBuf>,
    pub operator_path: PathBuf,
}

/// Output files written so far; removed again unless the run completes.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    done: bool,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), created_dir, files: Vec::new(), done: false })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(f))
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.done {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

/// Writes `iteration,residual,objective` rows.
pub fn write_residual_csv<W: Write>(mut w: W, result: &ReconResult, provenance: Option<&str>) -> Result<()> {
    if let Some(p) = provenance {
        writeln!(w, "# {p}")?;
    }
    writeln!(w, "iteration,residual,objective")?;
    for (i, r) in result.residual_history.iter().enumerate() {
        let obj = result.objective_history.get(i).copied().unwrap_or(f64::NAN);
        writeln!(w, "{},{r},{obj}", i + 1)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes predicted curve samples as `branch,alpha,r,x,y`.
pub fn write_curve_csv<W: Write>(
    mut w: W,
    curves: &crate::artifacts::DeltaCurves,
    provenance: Option<&str>,
) -> Result<()> {
    if let Some(p) = provenance {
        writeln!(w, "# {p}")?;
    }
    writeln!(w, "branch,alpha,r,x,y")?;
    for (name, c) in [("psi1", &curves.psi1), ("psi2", &curves.psi2)] {
        for p in c {
            writeln!(w, "{name},{},{},{},{}", p.alpha, p.r, p.point.x, p.point.y)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn only_disks(shapes: &[Shape]) -> bool {
    !shapes.is_empty() && shapes.iter().all(|s| matches!(s, Shape::Disk { .. } | Shape::Annulus { .. }))
}

/// Runs the configured experiment. Operators are cached under `cache_dir`
/// (default `<out_dir>/cache`); on error every file written by this run is
/// removed again.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let geom = cfg.geometry()?;
    let shapes = cfg.shapes()?;
    let prov = cfg.provenance();
    let mut out = Outputs::new(&cfg.out_dir)?;
    let cache = cfg.cache_dir.clone().unwrap_or_else(|| cfg.out_dir.join("cache"));
    let (op, operator_path) = assemble_cached(&grid, &geom, cfg.mode, &cache)?;
    let mut metrics = Metrics::default();

    let delta = cfg.delta_pixel(&grid)?;
    let truth = match delta {
        Some(((ix, iy), _)) => Phantom::Delta { ix, iy }.render(&grid),
        None => Phantom::Custom(shapes.clone()).render(&grid),
    };
    write_image(out.create("phantom.torimg")?, &truth, Some(&prov))?;

    let scale = cfg.binary_scale.factor(&grid, cfg.mode);
    let discrete = op.apply(&truth.values)?;
    let clean = if only_disks(&shapes) {
        let exact = analytic_sinogram(&geom, &shapes, grid.unit)?;
        let scaled: Vec<f64> = discrete.iter().map(|v| v * scale).collect();
        metrics.push("sinogram_rel_error", relative_error(&scaled, &exact.values));
        let avg = render_shapes_averaged(&shapes, &grid, 8);
        let scaled_avg: Vec<f64> = op.apply(&avg.values)?.iter().map(|v| v * scale).collect();
        metrics.push("sinogram_rel_error_cell_average", relative_error(&scaled_avg, &exact.values));
        write_sinogram(out.create("analytic.torsin")?, &exact, Some(&prov))?;
        match cfg.data {
            DataSource::Analytic => exact.values.iter().map(|v| v / scale).collect(),
            DataSource::Discrete => discrete,
        }
    } else {
        if cfg.data == DataSource::Analytic {
            return Err(Error::UnsupportedShape("phantom has non-disk shapes".into()));
        }
        discrete
    };
    let clean = Sinogram::from_values(geom.clone(), clean)?;
    write_sinogram(out.create("sinogram.torsin")?, &clean, Some(&prov))?;

    let noisy = add_noise(&clean, &NoiseSpec::new(cfg.noise, cfg.seed)?)?;
    metrics.push("noise_level", cfg.noise);
    metrics.push("realized_noise", realized_level(&clean.values, &noisy.values));
    write_sinogram(out.create("noisy.torsin")?, &noisy, Some(&prov))?;

    if let Some((_, x0)) = delta {
        overlay_outputs(&op, &truth, x0, &mut out, &mut metrics, &prov)?;
    }

    if let Some(solver) = cfg.solver() {
        let result = reconstruct(&op, &noisy.values, &solver, &grid)?;
        let recon = result.image(grid)?;
        write_image(out.create("reconstruction.torimg")?, &recon, Some(&prov))?;
        write_residual_csv(out.create("residuals.csv")?, &result, Some(&prov))?;
        metrics.push("iterations", result.iterations_used as f64);
        metrics.push("image_rel_error", relative_error(&result.solution, &truth.values));
        let mut labels: Vec<&str> = shapes.iter().filter_map(Shape::label).collect();
        labels.dedup();
        for label in labels {
            let mask = region_mask(&shapes, label, &grid)?;
            if !mask.iter().any(|&m| m) {
                continue;
            }
            let (true_avg, _) = region_metrics(&truth.values, &mask, 1.0)?;
            let (avg, err) = region_metrics(&result.solution, &mask, true_avg)?;
            metrics.push(format!("avg_{label}"), avg);
            metrics.push(format!("true_{label}"), true_avg);
            metrics.push(format!("err_{label}_percent"), err);
        }
    }

    let mut w = out.create("metrics.csv")?;
    w.write_all(metrics.to_csv(&prov).as_bytes())?;
    w.flush()?;
    drop(w);
    out.done = true;
    Ok(RunSummary { metrics, files: out.files.clone(), operator_path })
}

fn overlay_outputs(
    op: &SparseOperator,
    delta: &Image,
    x0: Vec2,
    out: &mut Outputs,
    metrics: &mut Metrics,
    prov: &str,
) -> Result<()> {
    let grid = delta.grid;
    let bp = Image::from_values(grid, op.backproject_normal(&delta.values)?)?;
    write_image(out.create("backprojection.torimg")?, &bp, Some(prov))?;
    let curves = delta_artifact_curves(x0, CURVE_SAMPLES)?;
    write_curve_csv(out.create("predicted.csv")?, &curves, Some(prov))?;
    let points = curves.points();
    metrics.push("overlay_score", overlay_score(&points, &bp, x0, OVERLAY_EXCLUSION)?);
    let c = closure(&curves, 1.0);
    metrics.push("curve_winding", c.winding as f64);
    metrics.push("curve_closed", if c.is_closed() { 1.0 } else { 0.0 });
    write_pgm(out.create("backprojection.pgm")?, &bp, &[])?;
    write_pgm(out.create("overlay.pgm")?, &bp, &burn_marks(&grid, &points))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_canonical_text() {
        let cfg = ExperimentConfig::parse(
            "# delta run\nphantom = delta\ndelta_x = -0.9\nn = 64 # small\nmode = length\nmethod = none\nnoise = 0.02\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.phantom, PhantomChoice::Delta(Vec2::new(-0.9, 0.0)));
        assert_eq!(cfg.n, 64);
        assert_eq!(cfg.method, None);
        let again = ExperimentConfig::parse(&cfg.canonical()).unwrap();
        assert_eq!(again.canonical(), cfg.canonical());
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn output_location_does_not_change_hash() {
        let mut a = ExperimentConfig::default();
        let h = a.hash();
        a.set("out_dir", "/elsewhere").unwrap();
        a.set("cache_dir", "/cache").unwrap();
        assert_eq!(a.hash(), h);
        a.set("seed", "3").unwrap();
        assert_ne!(a.hash(), h);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for text in ["frobnicate = 1", "n = many", "phantom = blob", "noise = -1", "method = htv\nlambda = 0", "no equals"] {
            let e = ExperimentConfig::parse(text).and_then(|c| c.validate());
            let e = e.expect_err(text);
            assert!(e.is_config(), "{text}: {e}");
        }
    }

    #[test]
    fn geometry_choices() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.geometry().unwrap().n_rows(), 71_640);
        cfg.set("n_alpha", "90").unwrap();
        assert_eq!(cfg.geometry().unwrap().n_rows(), 90 * 199);
        cfg.set("radii", "2.5, 3, 4").unwrap();
        assert_eq!(cfg.geometry().unwrap().radii, vec![2.5, 3.0, 4.0]);
        cfg.set("radii", "1.5").unwrap();
        assert!(cfg.geometry().is_err());
    }

    #[test]
    fn failed_run_leaves_no_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut cfg = ExperimentConfig::parse("n = 16\nn_alpha = 8\nradii = 2.5,4\nphantom = ring\nmethod = landweber\niters = 5\n").unwrap();
        cfg.out_dir = out.clone();
        cfg.cache_dir = Some(dir.path().join("cache"));
        let summary = run_pipeline(&cfg).unwrap();
        assert!(summary.files.iter().all(|f| f.exists()));

        let out2 = dir.path().join("bad");
        cfg.out_dir = out2.clone();
        cfg.phantom = PhantomChoice::File(dir.path().join("missing.txt"));
        assert!(run_pipeline(&cfg).is_err());
        assert!(!out2.exists());

        let table = dir.path().join("shapes.txt");
        fs::write(&table, "ellipse center=0,0 radii=0.3,0.2 value=1\n").unwrap();
        cfg.phantom = PhantomChoice::File(table);
        cfg.data = DataSource::Analytic;
        let err = run_pipeline(&cfg).unwrap_err();
        assert_eq!(err.module(), "analytic");
        assert!(!out2.exists());
    }
}
