//! The discrete toric section transform: scan geometry, sinograms, and the
//! row-compressed system matrix.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{Arc, ToricSection};
use crate::grid::{merge_sorted, trace_arc, GridSpec, TraceMode};

/// Units in which scan radii are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiusUnits {
    /// Detector-ring radius 1.
    UnitBall,
    /// 100 pixels per detector-ring radius (the 200-pixel reference grid).
    Pixel,
}

impl RadiusUnits {
    /// Divisor mapping stored radii to detector-ring units.
    pub fn scale(self) -> f64 {
        match self {
            RadiusUnits::UnitBall => 1.0,
            RadiusUnits::Pixel => 100.0,
        }
    }
}

/// Normalization that turns binary row sums into physical arc lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryScale {
    /// One pixel width per hit pixel.
    Pixel,
    /// `delta * pi / 4`, the mean chord a randomly oriented line cuts from
    /// each pixel it meets.
    MeanChord,
}

impl BinaryScale {
    /// Factor applied to `A v`; length-mode rows already carry lengths.
    pub fn factor(self, grid: &GridSpec, mode: TraceMode) -> f64 {
        match (mode, self) {
            (TraceMode::Length, _) => 1.0,
            (TraceMode::Binary, BinaryScale::Pixel) => grid.delta(),
            (TraceMode::Binary, BinaryScale::MeanChord) => grid.delta() * PI / 4.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pixel" => Ok(BinaryScale::Pixel),
            "mean-chord" => Ok(BinaryScale::MeanChord),
            _ => Err(Error::InvalidParameter(format!(
                "unknown binary scale '{s}' (pixel|mean-chord)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BinaryScale::Pixel => "pixel",
            BinaryScale::MeanChord => "mean-chord",
        }
    }
}

/// The `(r, alpha)` sample lattice. Row `k` of any operator or sinogram is
/// `radius_index * alphas.len() + angle_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGeometry {
    pub alphas: Vec<f64>,
    /// Radii in `units`.
    pub radii: Vec<f64>,
    pub units: RadiusUnits,
}

impl ScanGeometry {
    pub fn new(alphas: Vec<f64>, radii: Vec<f64>, units: RadiusUnits) -> Result<Self> {
        let scale = units.scale();
        if let Some(&bad) = radii.iter().find(|&&r| !(r / scale > 2.0)) {
            return Err(Error::DegenerateTorus(bad / scale));
        }
        if alphas.is_empty() || radii.is_empty() {
            return Err(Error::InvalidParameter(
                "scan geometry needs angles and radii".into(),
            ));
        }
        Ok(Self {
            alphas,
            radii,
            units,
        })
    }

    /// `n_alpha` equispaced angles `j 2pi / n_alpha`, `j = 1..=n_alpha`, with the given radii.
    pub fn uniform(n_alpha: usize, radii: Vec<f64>, units: RadiusUnits) -> Result<Self> {
        let alphas = (1..=n_alpha)
            .map(|j| j as f64 * 2.0 * PI / n_alpha as f64)
            .collect();
        Self::new(alphas, radii, units)
    }

    pub fn n_rows(&self) -> usize {
        self.alphas.len() * self.radii.len()
    }

    pub fn row(&self, radius_index: usize, angle_index: usize) -> usize {
        radius_index * self.alphas.len() + angle_index
    }

    /// Radius of row `k` in detector-ring units.
    pub fn unit_radius(&self, radius_index: usize) -> f64 {
        self.radii[radius_index] / self.units.scale()
    }

    pub fn section(&self, k: usize) -> ToricSection {
        let na = self.alphas.len();
        ToricSection::new(self.unit_radius(k / na), self.alphas[k % na])
            .expect("radii validated at construction")
    }
}

/// The reference scan: 360 angles `j pi / 180` and 199 radii `(j^2 + 200^2) / (2j)` pixels.
pub fn default_scan_geometry(units: RadiusUnits) -> ScanGeometry {
    let alphas = (1..=360).map(|j| j as f64 * PI / 180.0).collect();
    let radii = (1..=199)
        .map(|j| {
            let j = j as f64;
            let px = (j * j + 200.0 * 200.0) / (2.0 * j);
            px / (RadiusUnits::Pixel.scale() / units.scale())
        })
        .collect();
    ScanGeometry {
        alphas,
        radii,
        units,
    }
}

/// Data on a scan lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub geom: ScanGeometry,
    pub values: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(geom: ScanGeometry) -> Self {
        let n = geom.n_rows();
        Self {
            geom,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(geom: ScanGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geom.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: geom.n_rows(),
                got: values.len(),
            });
        }
        Ok(Self { geom, values })
    }

    pub fn get(&self, radius_index: usize, angle_index: usize) -> f64 {
        self.values[self.geom.row(radius_index, angle_index)]
    }
}

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n_rows: usize,
    n_cols: usize,
    offsets: Vec<usize>,
    indices: Vec<u32>,
    weights: Vec<f64>,
    mode: TraceMode,
}

/// Number of fixed row blocks used for the transpose product, so that the
/// summation order never depends on the thread count.
const TRANSPOSE_BLOCKS: usize = 16;

impl SparseOperator {
    /// Builds from per-row `(column, weight)` lists, which must be sorted by column.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>, mode: TraceMode) -> Result<Self> {
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut weights = Vec::with_capacity(nnz);
        offsets.push(0);
        for row in &rows {
            let mut prev: Option<usize> = None;
            for &(c, w) in row {
                if c >= n_cols || prev.is_some_and(|p| p >= c) {
                    return Err(Error::InvalidParameter(format!(
                        "row columns must be strictly increasing and < {n_cols}"
                    )));
                }
                if !(w >= 0.0) {
                    return Err(Error::InvalidParameter(format!("negative weight {w}")));
                }
                prev = Some(c);
                indices.push(c as u32);
                weights.push(w);
            }
            offsets.push(indices.len());
        }
        Ok(Self {
            n_rows: rows.len(),
            n_cols,
            offsets,
            indices,
            weights,
            mode,
        })
    }

    /// Dense row-major matrix to sparse, dropping zeros. Entries must be nonnegative.
    pub fn from_dense(n_rows: usize, n_cols: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_cols,
                got: dense.len(),
            });
        }
        let rows = dense
            .chunks(n_cols)
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &w)| w != 0.0)
                    .map(|(c, &w)| (c, w))
                    .collect()
            })
            .collect();
        Self::from_rows(n_cols, rows, TraceMode::Length)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn mode(&self) -> TraceMode {
        self.mode
    }

    /// Columns and weights of row `k`.
    pub fn row(&self, k: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.offsets[k], self.offsets[k + 1]);
        (&self.indices[a..b], &self.weights[a..b])
    }

    /// `A v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: v.len(),
            });
        }
        Ok((0..self.n_rows)
            .into_par_iter()
            .with_min_len(256)
            .map(|k| {
                let (cols, w) = self.row(k);
                cols.iter().zip(w).map(|(&c, &w)| w * v[c as usize]).sum()
            })
            .collect())
    }

    /// `A^T b`.
    pub fn apply_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                got: b.len(),
            });
        }
        let block = self.n_rows.div_ceil(TRANSPOSE_BLOCKS).max(1);
        let partials: Vec<Vec<f64>> = (0..self.n_rows.div_ceil(block))
            .into_par_iter()
            .map(|blk| {
                let mut acc = vec![0.0; self.n_cols];
                for k in blk * block..((blk + 1) * block).min(self.n_rows) {
                    let bk = b[k];
                    if bk == 0.0 {
                        continue;
                    }
                    let (cols, w) = self.row(k);
                    for (&c, &w) in cols.iter().zip(w) {
                        acc[c as usize] += w * bk;
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; self.n_cols];
        for p in &partials {
            for (o, x) in out.iter_mut().zip(p) {
                *o += x;
            }
        }
        Ok(out)
    }

    /// Normal operator `A^T A v`.
    pub fn backproject_normal(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply_transpose(&self.apply(v)?)
    }

    /// Column sums `A^T 1`.
    pub fn column_sums(&self) -> Vec<f64> {
        self.apply_transpose(&vec![1.0; self.n_rows])
            .expect("dimensions match")
    }

    pub fn row_sum(&self, k: usize) -> f64 {
        self.row(k).1.iter().sum()
    }

    /// Writes the `TORMAT v1` format: a text header line followed by
    /// little-endian u64 offsets, u64 column indices, and f64 weights.
    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(
            w,
            "TORMAT v1 {} {} {} {}",
            self.n_rows,
            self.n_cols,
            self.nnz(),
            self.mode.as_str()
        )?;
        for &o in &self.offsets {
            w.write_all(&(o as u64).to_le_bytes())?;
        }
        for &c in &self.indices {
            w.write_all(&(c as u64).to_le_bytes())?;
        }
        for &x in &self.weights {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut header = String::new();
        r.read_line(&mut header)?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 || h[0] != "TORMAT" || h[1] != "v1" {
            return Err(Error::Parse(format!(
                "bad TORMAT header '{}'",
                header.trim_end()
            )));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad count '{s}'")))
        };
        let (n_rows, n_cols, nnz) = (num(h[2])?, num(h[3])?, num(h[4])?);
        let mode = TraceMode::parse(h[5])?;
        let mut buf = [0u8; 8];
        let mut next = |r: &mut BufReader<R>| -> Result<[u8; 8]> {
            r.read_exact(&mut buf)?;
            Ok(buf)
        };
        let mut offsets = Vec::with_capacity(n_rows + 1);
        for _ in 0..=n_rows {
            offsets.push(u64::from_le_bytes(next(&mut r)?) as usize);
        }
        let mut indices = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let c = u64::from_le_bytes(next(&mut r)?);
            if c >= n_cols as u64 {
                return Err(Error::Parse(format!("column index {c} out of range")));
            }
            indices.push(c as u32);
        }
        let mut weights = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            weights.push(f64::from_le_bytes(next(&mut r)?));
        }
        if offsets.first() != Some(&0)
            || offsets.last() != Some(&nnz)
            || offsets.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::Parse("inconsistent row offsets".into()));
        }
        Ok(Self {
            n_rows,
            n_cols,
            offsets,
            indices,
            weights,
            mode,
        })
    }
}

/// Row `k` of the discrete transform: both arcs traced and merged.
pub fn assemble_row(grid: &GridSpec, ts: &ToricSection, mode: TraceMode) -> Vec<(usize, f64)> {
    let mut entries = trace_arc(grid, ts, Arc::C1, mode);
    entries.extend(trace_arc(grid, ts, Arc::C2, mode));
    merge_sorted(entries)
}

/// Assembles the system matrix; rows are traced in parallel and stored in
/// lattice order.
pub fn assemble(grid: &GridSpec, geom: &ScanGeometry, mode: TraceMode) -> SparseOperator {
    let rows: Vec<Vec<(usize, f64)>> = (0..geom.n_rows())
        .into_par_iter()
        .with_min_len(64)
        .map(|k| assemble_row(grid, &geom.section(k), mode))
        .collect();
    SparseOperator::from_rows(grid.len(), rows, mode)
        .expect("traced rows are sorted and nonnegative")
}

/// Cache key for an operator: hash of grid, geometry, mode, and format version.
pub fn operator_key(grid: &GridSpec, geom: &ScanGeometry, mode: TraceMode) -> String {
    let mut h = Sha256::new();
    h.update(b"TORMAT v1;trace v1;");
    h.update((grid.n as u64).to_le_bytes());
    h.update(grid.half_extent.to_le_bytes());
    h.update(grid.unit.to_le_bytes());
    h.update(geom.units.scale().to_le_bytes());
    for a in &geom.alphas {
        h.update(a.to_le_bytes());
    }
    h.update(b";");
    for r in &geom.radii {
        h.update(r.to_le_bytes());
    }
    h.update(mode.as_str().as_bytes());
    h.finalize()
        .iter()
        .take(12)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Loads the operator from `dir` if cached, otherwise assembles and stores it.
pub fn assemble_cached(
    grid: &GridSpec,
    geom: &ScanGeometry,
    mode: TraceMode,
    dir: &Path,
) -> Result<(SparseOperator, PathBuf)> {
    let path = dir.join(format!("op-{}.tormat", operator_key(grid, geom, mode)));
    if path.exists() {
        if let Ok(op) = SparseOperator::read(File::open(&path)?) {
            if op.n_rows() == geom.n_rows() && op.n_cols() == grid.len() && op.mode() == mode {
                return Ok((op, path));
            }
        }
    }
    let op = assemble(grid, geom, mode);
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension("tmp");
    op.write(File::create(&tmp)?)?;
    fs::rename(&tmp, &path)?;
    Ok((op, path))
}

/// Writes a `TORSIN v1` sinogram: header, radii line, angles line, then one
/// line of values per radius.
pub fn write_sinogram<W: Write>(w: W, sino: &Sinogram, provenance: Option<&str>) -> Result<()> {
    let mut w = BufWriter::new(w);
    let g = &sino.geom;
    writeln!(w, "TORSIN v1 {} {}", g.radii.len(), g.alphas.len())?;
    if let Some(p) = provenance {
        writeln!(w, "# {p}")?;
    }
    let join = |xs: &[f64]| {
        xs.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(w, "{}", join(&g.radii))?;
    writeln!(w, "{}", join(&g.alphas))?;
    for row in sino.values.chunks(g.alphas.len()) {
        writeln!(w, "{}", join(row))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `TORSIN v1` sinogram. Radii above 20 are taken to be in pixel
/// units (no unit-ball radius of the reference scan exceeds 200).
pub fn read_sinogram<R: Read>(r: R, units: Option<RadiusUnits>) -> Result<Sinogram> {
    let mut lines = BufReader::new(r)
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim_start().starts_with('#')));
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty sinogram file".into()))??;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 4 || h[0] != "TORSIN" || h[1] != "v1" {
        return Err(Error::Parse(format!("bad TORSIN header '{header}'")));
    }
    let n_r: usize = h[2]
        .parse()
        .map_err(|_| Error::Parse("bad radius count".into()))?;
    let n_a: usize = h[3]
        .parse()
        .map_err(|_| Error::Parse("bad angle count".into()))?;
    let mut nums = Vec::new();
    for line in lines {
        for tok in line?.split_whitespace() {
            nums.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad value '{tok}'")))?,
            );
        }
    }
    if nums.len() != n_r + n_a + n_r * n_a {
        return Err(Error::Parse(format!(
            "expected {} numbers, found {}",
            n_r + n_a + n_r * n_a,
            nums.len()
        )));
    }
    let radii = nums[..n_r].to_vec();
    let alphas = nums[n_r..n_r + n_a].to_vec();
    let units = units.unwrap_or(if radii.iter().any(|&r| r > 20.0) {
        RadiusUnits::Pixel
    } else {
        RadiusUnits::UnitBall
    });
    let geom = ScanGeometry::new(alphas, radii, units)?;
    Sinogram::from_values(geom, nums[n_r + n_a..].to_vec())
}
