//! Square pixel grids, images, and arc rasterization.

use std::f64::consts::TAU;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use crate::error::{Error, Result};
use crate::geometry::{Arc, ToricSection, Vec2};

/// A square `n x n` pixel grid covering `[-L, L]^2` in world units.
///
/// `unit` is the world length of the detector-ring radius; toric-section
/// geometry (always expressed in detector-ring units) is scaled by it before
/// rasterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n: usize,
    pub half_extent: f64,
    pub unit: f64,
}

impl GridSpec {
    /// Grid whose half-width equals the detector-ring radius.
    pub fn new(n: usize, half_extent: f64) -> Result<Self> {
        Self::with_unit(n, half_extent, half_extent)
    }

    pub fn with_unit(n: usize, half_extent: f64, unit: f64) -> Result<Self> {
        if n == 0 || !(half_extent > 0.0) || !(unit > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid needs n > 0, L > 0, unit > 0 (n = {n}, L = {half_extent}, unit = {unit})"
            )));
        }
        Ok(Self {
            n,
            half_extent,
            unit,
        })
    }

    /// The `n x n` grid on `[-1, 1]^2` used for the unit-ball experiments.
    pub fn unit_ball(n: usize) -> Self {
        Self {
            n,
            half_extent: 1.0,
            unit: 1.0,
        }
    }

    /// Pixel size.
    pub fn delta(&self) -> f64 {
        2.0 * self.half_extent / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n + ix
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    pub fn pixel_center(&self, ix: usize, iy: usize) -> Vec2 {
        let d = self.delta();
        Vec2::new(
            -self.half_extent + (ix as f64 + 0.5) * d,
            -self.half_extent + (iy as f64 + 0.5) * d,
        )
    }

    /// Pixel centre in detector-ring units.
    pub fn pixel_center_unit(&self, ix: usize, iy: usize) -> Vec2 {
        self.pixel_center(ix, iy) * (1.0 / self.unit)
    }

    /// Pixel containing `p`; `None` outside `[-L, L)^2`.
    pub fn world_to_pixel(&self, p: Vec2) -> Option<(usize, usize)> {
        let d = self.delta();
        let fx = ((p.x + self.half_extent) / d).floor();
        let fy = ((p.y + self.half_extent) / d).floor();
        let n = self.n as f64;
        if fx >= 0.0 && fy >= 0.0 && fx < n && fy < n {
            Some((fx as usize, fy as usize))
        } else {
            None
        }
    }
}

/// A real-valued image on a grid, stored row-major by `iy` then `ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl Image {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.grid.index(ix, iy)]
    }

    pub fn set(&mut self, ix: usize, iy: usize, v: f64) {
        let i = self.grid.index(ix, iy);
        self.values[i] = v;
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Bilinear interpolation between pixel centres (world coordinates),
    /// zero outside the grid.
    pub fn sample_bilinear(&self, p: Vec2) -> f64 {
        let g = &self.grid;
        let d = g.delta();
        let fx = (p.x + g.half_extent) / d - 0.5;
        let fy = (p.y + g.half_extent) / d - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let (ax, ay) = (fx - x0, fy - y0);
        let n = g.n as i64;
        let at = |ix: i64, iy: i64| -> f64 {
            if ix < 0 || iy < 0 || ix >= n || iy >= n {
                0.0
            } else {
                self.values[iy as usize * g.n + ix as usize]
            }
        };
        let (x0, y0) = (x0 as i64, y0 as i64);
        (1.0 - ay) * ((1.0 - ax) * at(x0, y0) + ax * at(x0 + 1, y0))
            + ay * ((1.0 - ax) * at(x0, y0 + 1) + ax * at(x0 + 1, y0 + 1))
    }
}

/// How a rasterized arc weights the pixels it meets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceMode {
    /// Weight 1 for every pixel the arc passes through.
    Binary,
    /// Weight equal to the arc length inside the pixel.
    Length,
}

impl TraceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceMode::Binary => "binary",
            TraceMode::Length => "length",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(TraceMode::Binary),
            "length" => Ok(TraceMode::Length),
            other => Err(Error::Parse(format!("unknown trace mode '{other}'"))),
        }
    }
}

/// Ordered pixel visits of the super-sampled arc (step `delta / 4` in arc
/// length). `None` marks samples that fall outside the grid.
pub fn arc_pixel_path(
    grid: &GridSpec,
    ts: &ToricSection,
    which: Arc,
) -> Vec<Option<(usize, usize)>> {
    let center = ts.center(which) * grid.unit;
    let radius = ts.r * grid.unit;
    let (mid, half) = ts.arc_interval(which);
    let step = grid.delta() / 4.0;
    let len = 2.0 * radius * half;
    let segments = ((len / step).ceil() as usize).max(1);
    let b0 = mid - half;
    let db = 2.0 * half / segments as f64;
    (0..=segments)
        .map(|k| grid.world_to_pixel(center + Vec2::polar(b0 + k as f64 * db) * radius))
        .collect()
}

/// Rasterizes one arc of a toric section. Returns `(pixel index, weight)`
/// pairs sorted by pixel index with no duplicates.
pub fn trace_arc(
    grid: &GridSpec,
    ts: &ToricSection,
    which: Arc,
    mode: TraceMode,
) -> Vec<(usize, f64)> {
    match mode {
        TraceMode::Binary => {
            let mut idx: Vec<usize> = arc_pixel_path(grid, ts, which)
                .into_iter()
                .flatten()
                .map(|(ix, iy)| grid.index(ix, iy))
                .collect();
            idx.sort_unstable();
            idx.dedup();
            idx.into_iter().map(|i| (i, 1.0)).collect()
        }
        TraceMode::Length => trace_arc_length(grid, ts, which),
    }
}

/// Exact arc lengths per pixel, from the angles at which the circle crosses
/// grid lines.
fn trace_arc_length(grid: &GridSpec, ts: &ToricSection, which: Arc) -> Vec<(usize, f64)> {
    let center = ts.center(which) * grid.unit;
    let radius = ts.r * grid.unit;
    let (mid, half) = ts.arc_interval(which);
    let b0 = mid - half;
    let b1 = mid + half;
    let d = grid.delta();
    let l = grid.half_extent;

    // Every crossing angle is mapped into [b0, b0 + 2pi) and kept if on the arc.
    let mut cuts = vec![b0, b1];
    let mut push = |beta: f64| {
        let b = b0 + (beta - b0).rem_euclid(TAU);
        if b > b0 && b < b1 {
            cuts.push(b);
        }
    };
    for k in 0..=grid.n {
        let line = -l + k as f64 * d;
        let cx = (line - center.x) / radius;
        if cx.abs() <= 1.0 {
            let a = cx.acos();
            push(a);
            push(-a);
        }
        let sy = (line - center.y) / radius;
        if sy.abs() <= 1.0 {
            let a = sy.asin();
            push(a);
            push(std::f64::consts::PI - a);
        }
    }
    cuts.sort_by(|a, b| a.total_cmp(b));

    let mut out: Vec<(usize, f64)> = Vec::new();
    for w in cuts.windows(2) {
        let db = w[1] - w[0];
        if db <= 0.0 {
            continue;
        }
        let p = center + Vec2::polar(0.5 * (w[0] + w[1])) * radius;
        if let Some((ix, iy)) = grid.world_to_pixel(p) {
            out.push((grid.index(ix, iy), radius * db));
        }
    }
    merge_sorted(out)
}

/// Sorts by pixel index and sums weights of repeated pixels.
pub(crate) fn merge_sorted(mut entries: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    entries.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
    for (i, w) in entries {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += w,
            _ => out.push((i, w)),
        }
    }
    out
}

/// Writes an image in the `TORIMG v1` text format. An optional provenance
/// string is emitted as a `#` comment line after the header.
pub fn write_image<W: Write>(w: W, img: &Image, provenance: Option<&str>) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "TORIMG v1 {} {}", img.grid.n, img.grid.half_extent)?;
    if let Some(p) = provenance {
        writeln!(w, "# {p}")?;
    }
    for row in img.values.chunks(img.grid.n) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `TORIMG v1` file. The grid unit defaults to the half-extent.
pub fn read_image<R: Read>(r: R) -> Result<Image> {
    let mut lines = BufReader::new(r).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty image file".into()))??;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 4 || h[0] != "TORIMG" || h[1] != "v1" {
        return Err(Error::Parse(format!("bad TORIMG header '{header}'")));
    }
    let n: usize = h[2]
        .parse()
        .map_err(|_| Error::Parse(format!("bad grid size '{}'", h[2])))?;
    let l: f64 = h[3]
        .parse()
        .map_err(|_| Error::Parse(format!("bad half extent '{}'", h[3])))?;
    let grid = GridSpec::new(n, l)?;
    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line?;
        if line.trim_start().starts_with('#') {
            continue;
        }
        for tok in line.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad value '{tok}'")))?,
            );
        }
    }
    Image::from_values(grid, values)
}

/// Writes an 8-bit binary PGM, min-max scaled, with `y` pointing up.
/// Pixels listed in `marks` are burned in at full white.
pub fn write_pgm<W: Write>(w: W, img: &Image, marks: &[(usize, usize)]) -> Result<()> {
    let n = img.grid.n;
    let (lo, hi) = (img.min(), img.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut bytes = vec![0u8; n * n];
    for iy in 0..n {
        for ix in 0..n {
            let v = (img.get(ix, iy) - lo) / span;
            // Leave headroom so burned-in marks stand out.
            bytes[(n - 1 - iy) * n + ix] = (v * 220.0).round().clamp(0.0, 220.0) as u8;
        }
    }
    for &(ix, iy) in marks {
        if ix < n && iy < n {
            bytes[(n - 1 - iy) * n + ix] = 255;
        }
    }
    let mut w = BufWriter::new(w);
    write!(w, "P5\n{n} {n}\n255\n")?;
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ToricSection;

    #[test]
    fn first_pixel_and_outside() {
        let g = GridSpec::unit_ball(200);
        assert_eq!(g.world_to_pixel(Vec2::new(-0.995, -0.995)), Some((0, 0)));
        assert_eq!(g.world_to_pixel(Vec2::new(1.5, 0.0)), None);
        assert_eq!(g.world_to_pixel(Vec2::new(1.0, 0.0)), None);
        assert_eq!(g.world_to_pixel(Vec2::new(-1.0, -1.0)), Some((0, 0)));
    }

    #[test]
    fn pixel_center_round_trip() {
        let g = GridSpec::new(37, 100.0).unwrap();
        for iy in 0..g.n {
            for ix in 0..g.n {
                let c = g.pixel_center(ix, iy);
                assert_eq!(g.world_to_pixel(c), Some((ix, iy)));
            }
        }
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(GridSpec::new(0, 1.0).is_err());
        assert!(GridSpec::new(10, -1.0).is_err());
    }

    #[test]
    fn arc_outside_grid_is_empty() {
        // A small grid around (0.9, 0.9)-ish corner misses arcs of a section
        // rotated away; use a tiny grid near the origin and a section whose
        // arcs stay far from it.
        let g = GridSpec::with_unit(20, 0.05, 1.0).unwrap();
        let ts = ToricSection::new(2.0001, 0.0).unwrap();
        for which in Arc::BOTH {
            assert!(trace_arc(&g, &ts, which, TraceMode::Binary).is_empty());
            assert!(trace_arc(&g, &ts, which, TraceMode::Length).is_empty());
        }
    }

    #[test]
    fn binary_weights_are_unit_and_unique() {
        let g = GridSpec::unit_ball(200);
        let ts = ToricSection::new(2.7, 0.9).unwrap();
        for which in Arc::BOTH {
            let row = trace_arc(&g, &ts, which, TraceMode::Binary);
            assert!(!row.is_empty());
            assert!(row.iter().all(|&(_, w)| w == 1.0));
            assert!(row.windows(2).all(|p| p[0].0 < p[1].0));
        }
    }

    #[test]
    fn binary_path_is_eight_connected() {
        let g = GridSpec::unit_ball(200);
        for &(r, a) in &[(2.05, 0.3), (3.0, 2.0), (40.0, 4.4)] {
            let ts = ToricSection::new(r, a).unwrap();
            for which in Arc::BOTH {
                let path = arc_pixel_path(&g, &ts, which);
                for w in path.windows(2) {
                    if let (Some(p), Some(q)) = (w[0], w[1]) {
                        let dx = (p.0 as i64 - q.0 as i64).abs();
                        let dy = (p.1 as i64 - q.1 as i64).abs();
                        assert!(dx <= 1 && dy <= 1, "gap between {p:?} and {q:?}");
                    }
                }
            }
        }
    }

    /// Oracle: arc length inside the grid by dense midpoint sampling.
    fn sampled_length_inside(g: &GridSpec, ts: &ToricSection, which: Arc, samples: usize) -> f64 {
        let (mid, half) = ts.arc_interval(which);
        let c = ts.center(which) * g.unit;
        let r = ts.r * g.unit;
        let db = 2.0 * half / samples as f64;
        (0..samples)
            .filter(|&k| {
                let b = mid - half + (k as f64 + 0.5) * db;
                g.world_to_pixel(c + Vec2::polar(b) * r).is_some()
            })
            .count() as f64
            * r
            * db
    }

    #[test]
    fn length_mode_matches_sampled_arc_length() {
        let g = GridSpec::unit_ball(200);
        for &(r, a) in &[(2.2, 0.1), (3.5, 1.7), (12.0, 3.9), (150.0, 5.5)] {
            let ts = ToricSection::new(r, a).unwrap();
            for which in Arc::BOTH {
                let row = trace_arc(&g, &ts, which, TraceMode::Length);
                let total: f64 = row.iter().map(|e| e.1).sum();
                let oracle = sampled_length_inside(&g, &ts, which, 10_000);
                assert!(
                    ((total - oracle) / oracle).abs() <= 1e-3,
                    "r {r}: {total} vs {oracle}"
                );
                let cap = g.delta() * 2f64.sqrt() * (1.0 + 1e-9);
                assert!(row.iter().all(|&(_, w)| w >= 0.0 && w <= cap));
            }
        }
    }

    #[test]
    fn length_support_matches_binary_support_closely() {
        let g = GridSpec::unit_ball(100);
        let ts = ToricSection::new(2.9, 0.4).unwrap();
        let bin = trace_arc(&g, &ts, Arc::C2, TraceMode::Binary);
        let len = trace_arc(&g, &ts, Arc::C2, TraceMode::Length);
        // Super-sampling can only miss corner clips, never invent pixels.
        let len_set: std::collections::HashSet<usize> = len.iter().map(|e| e.0).collect();
        assert!(bin.iter().all(|e| len_set.contains(&e.0)));
        assert!(len.len() - bin.len() <= len.len() / 10);
    }

    #[test]
    fn torimg_round_trip() {
        let g = GridSpec::new(3, 2.0).unwrap();
        let img = Image::from_values(g, (0..9).map(|k| k as f64 * 0.1 - 0.3).collect()).unwrap();
        let mut buf = Vec::new();
        write_image(&mut buf, &img, Some("toric test")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("TORIMG v1 3 2\n# toric test\n"));
        let back = read_image(buf.as_slice()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn torimg_rejects_bad_input() {
        assert!(read_image("TORIMG v2 2 1\n1 2 3 4\n".as_bytes()).is_err());
        assert!(read_image("TORIMG v1 2 1\n1 2 3\n".as_bytes()).is_err());
        assert!(read_image("TORIMG v1 2 1\n1 x 3 4\n".as_bytes()).is_err());
    }

    #[test]
    fn pgm_has_header_and_size() {
        let g = GridSpec::unit_ball(4);
        let img = Image::from_values(g, (0..16).map(|k| k as f64).collect()).unwrap();
        let mut buf = Vec::new();
        write_pgm(&mut buf, &img, &[(0, 0)]).unwrap();
        assert!(buf.starts_with(b"P5\n4 4\n255\n"));
        assert_eq!(buf.len(), 11 + 16);
        // (0, 0) is the bottom-left pixel, stored in the last PGM row.
        assert_eq!(buf[11 + 12], 255);
    }

    #[test]
    fn bilinear_reproduces_affine_fields() {
        let g = GridSpec::unit_ball(50);
        let mut img = Image::zeros(g);
        for iy in 0..g.n {
            for ix in 0..g.n {
                let c = g.pixel_center(ix, iy);
                img.set(ix, iy, 2.0 * c.x - c.y + 0.5);
            }
        }
        let p = Vec2::new(0.123, -0.456);
        assert!((img.sample_bilinear(p) - (2.0 * p.x - p.y + 0.5)).abs() < 1e-12);
    }
}
