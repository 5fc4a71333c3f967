//! Test images: simple, complex, delta and ring phantoms.
//!
//! Shapes live in detector-ring units; rendering samples each pixel centre
//! and sums the values of all shapes containing it.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid::{GridSpec, Image};

const COMPLEX_TABLE: &str = include_str!("../phantoms/complex.txt");
const SIMPLE_TABLE: &str = include_str!("../phantoms/simple.txt");

/// A constant-density planar shape. Angles are radians, CCW.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Disk {
        center: Vec2,
        radius: f64,
        value: f64,
        label: Option<String>,
    },
    Annulus {
        center: Vec2,
        inner: f64,
        outer: f64,
        value: f64,
        label: Option<String>,
    },
    Ellipse {
        center: Vec2,
        radii: Vec2,
        angle: f64,
        value: f64,
        label: Option<String>,
    },
    Square {
        center: Vec2,
        side: f64,
        angle: f64,
        value: f64,
        label: Option<String>,
    },
    /// Equilateral triangle with circumradius `radius`, one vertex along the local +y axis.
    Triangle {
        center: Vec2,
        radius: f64,
        angle: f64,
        value: f64,
        label: Option<String>,
    },
    /// Plus sign made of two bars of half-length `arm` and half-width `width`.
    Cross {
        center: Vec2,
        arm: f64,
        width: f64,
        angle: f64,
        value: f64,
        label: Option<String>,
    },
}

impl Shape {
    pub fn kind(&self) -> &'static str {
        match self {
            Shape::Disk { .. } => "disk",
            Shape::Annulus { .. } => "annulus",
            Shape::Ellipse { .. } => "ellipse",
            Shape::Square { .. } => "square",
            Shape::Triangle { .. } => "triangle",
            Shape::Cross { .. } => "cross",
        }
    }

    pub fn center(&self) -> Vec2 {
        match *self {
            Shape::Disk { center, .. }
            | Shape::Annulus { center, .. }
            | Shape::Ellipse { center, .. }
            | Shape::Square { center, .. }
            | Shape::Triangle { center, .. }
            | Shape::Cross { center, .. } => center,
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Shape::Disk { value, .. }
            | Shape::Annulus { value, .. }
            | Shape::Ellipse { value, .. }
            | Shape::Square { value, .. }
            | Shape::Triangle { value, .. }
            | Shape::Cross { value, .. } => value,
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            Shape::Disk { label, .. }
            | Shape::Annulus { label, .. }
            | Shape::Ellipse { label, .. }
            | Shape::Square { label, .. }
            | Shape::Triangle { label, .. }
            | Shape::Cross { label, .. } => label.as_deref(),
        }
    }

    fn angle(&self) -> f64 {
        match *self {
            Shape::Disk { .. } | Shape::Annulus { .. } => 0.0,
            Shape::Ellipse { angle, .. }
            | Shape::Square { angle, .. }
            | Shape::Triangle { angle, .. }
            | Shape::Cross { angle, .. } => angle,
        }
    }

    /// Radius of a disk around the centre that contains the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Disk { radius, .. } => radius,
            Shape::Annulus { outer, .. } => outer,
            Shape::Ellipse { radii, .. } => radii.x.max(radii.y),
            Shape::Square { side, .. } => side / 2f64.sqrt(),
            Shape::Triangle { radius, .. } => radius,
            Shape::Cross { arm, width, .. } => arm.hypot(width),
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let q = (p - self.center()).rotate(-self.angle());
        match *self {
            Shape::Disk { radius, .. } => q.norm_sq() <= radius * radius,
            Shape::Annulus { inner, outer, .. } => {
                let d = q.norm_sq();
                d >= inner * inner && d <= outer * outer
            }
            Shape::Ellipse { radii, .. } => {
                (q.x / radii.x).powi(2) + (q.y / radii.y).powi(2) <= 1.0
            }
            Shape::Square { side, .. } => q.x.abs() <= side / 2.0 && q.y.abs() <= side / 2.0,
            Shape::Triangle { radius, .. } => {
                // Outward edge normals at -90, 30 and 150 degrees; inradius R/2.
                [-PI / 2.0, PI / 6.0, 5.0 * PI / 6.0]
                    .iter()
                    .all(|&a| q.dot(Vec2::polar(a)) <= radius / 2.0)
            }
            Shape::Cross { arm, width, .. } => {
                let (x, y) = (q.x.abs(), q.y.abs());
                (x <= arm && y <= width) || (x <= width && y <= arm)
            }
        }
    }

    /// The shape rotated about the origin by `a` radians.
    pub fn rotated(&self, a: f64) -> Shape {
        let mut s = self.clone();
        match &mut s {
            Shape::Disk { center, .. } | Shape::Annulus { center, .. } => {
                *center = center.rotate(a)
            }
            Shape::Ellipse { center, angle, .. }
            | Shape::Square { center, angle, .. }
            | Shape::Triangle { center, angle, .. }
            | Shape::Cross { center, angle, .. } => {
                *center = center.rotate(a);
                *angle += a;
            }
        }
        s
    }
}

/// The phantom families used in the experiments.
#[derive(Debug, Clone, PartialEq)]
pub enum Phantom {
    /// A disc of value 2 and a square of value 1.
    Simple,
    /// Overlapping ellipses with a triangle (density 3) and a cross (density 4).
    Complex,
    /// A 3x3 block of ones centred on pixel `(ix, iy)`.
    Delta {
        ix: usize,
        iy: usize,
    },
    /// Six annuli of radii 0.10..0.15 at distance 0.5, the j-th with value j
    /// at angle j pi/3.
    Ring,
    Custom(Vec<Shape>),
}

impl Phantom {
    /// Continuous shapes of the phantom (empty for the pixel delta).
    pub fn shapes(&self) -> Vec<Shape> {
        match self {
            Phantom::Simple => parse_shapes(SIMPLE_TABLE).expect("bundled table parses"),
            Phantom::Complex => parse_shapes(COMPLEX_TABLE).expect("bundled table parses"),
            Phantom::Delta { .. } => Vec::new(),
            Phantom::Ring => ring_shapes(),
            Phantom::Custom(shapes) => shapes.clone(),
        }
    }

    /// Whether every shape lies inside the open unit ball.
    pub fn fits_unit_ball(&self) -> bool {
        self.shapes()
            .iter()
            .all(|s| s.center().norm() + s.bounding_radius() < 1.0)
    }

    pub fn render(&self, grid: &GridSpec) -> Image {
        match *self {
            Phantom::Delta { ix, iy } => {
                let mut img = Image::zeros(*grid);
                let n = grid.n as i64;
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let (x, y) = (ix as i64 + dx, iy as i64 + dy);
                        if (0..n).contains(&x) && (0..n).contains(&y) {
                            img.set(x as usize, y as usize, 1.0);
                        }
                    }
                }
                img
            }
            _ => render_shapes(&self.shapes(), grid),
        }
    }
}

fn ring_shapes() -> Vec<Shape> {
    (1..=6)
        .map(|j| {
            let a = j as f64 * PI / 3.0;
            Shape::Annulus {
                center: Vec2::polar(a) * 0.5,
                inner: 0.10,
                outer: 0.15,
                value: j as f64,
                label: Some(format!("ring{j}")),
            }
        })
        .collect()
}

/// Samples the sum of shape values at each pixel centre.
pub fn render_shapes(shapes: &[Shape], grid: &GridSpec) -> Image {
    let mut img = Image::zeros(*grid);
    for iy in 0..grid.n {
        for ix in 0..grid.n {
            let p = grid.pixel_center_unit(ix, iy);
            let v: f64 = shapes
                .iter()
                .filter(|s| s.contains(p))
                .map(Shape::value)
                .sum();
            img.set(ix, iy, v);
        }
    }
    img
}

/// Cell averages of the shape sum, from `k`x`k` midpoint samples per pixel.
pub fn render_shapes_averaged(shapes: &[Shape], grid: &GridSpec, k: usize) -> Image {
    let k = k.max(1);
    let d = grid.delta() / grid.unit;
    let mut img = Image::zeros(*grid);
    for iy in 0..grid.n {
        for ix in 0..grid.n {
            let c = grid.pixel_center_unit(ix, iy);
            let mut acc = 0.0;
            for a in 0..k {
                for b in 0..k {
                    let off = |i: usize| d * ((i as f64 + 0.5) / k as f64 - 0.5);
                    let p = Vec2::new(c.x + off(a), c.y + off(b));
                    acc += shapes
                        .iter()
                        .filter(|s| s.contains(p))
                        .map(Shape::value)
                        .sum::<f64>();
                }
            }
            img.set(ix, iy, acc / (k * k) as f64);
        }
    }
    img
}

/// Pixels whose centres lie inside the shape carrying `label`.
pub fn region_mask(shapes: &[Shape], label: &str, grid: &GridSpec) -> Result<Vec<bool>> {
    let shape = shapes
        .iter()
        .find(|s| s.label() == Some(label))
        .ok_or_else(|| Error::InvalidParameter(format!("no shape labelled '{label}'")))?;
    Ok((0..grid.len())
        .map(|i| {
            let (ix, iy) = grid.coords(i);
            shape.contains(grid.pixel_center_unit(ix, iy))
        })
        .collect())
}

/// Parses a phantom table: one shape per line, `kind key=value ...`,
/// `#` comments. Points are `x,y`; angles are degrees.
pub fn parse_shapes(text: &str) -> Result<Vec<Shape>> {
    let mut shapes = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| Error::Parse(format!("phantom line {}: {m}", lineno + 1));
        let mut toks = line.split_whitespace();
        let kind = toks.next().unwrap_or_default();
        let mut kv = std::collections::HashMap::new();
        for t in toks {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got '{t}'")))?;
            kv.insert(k, v);
        }
        let num = |k: &str| -> Result<f64> {
            kv.get(k)
                .ok_or_else(|| err(format!("missing '{k}'")))?
                .parse::<f64>()
                .map_err(|_| err(format!("bad number for '{k}'")))
        };
        let pair = |k: &str| -> Result<Vec2> {
            let v = kv.get(k).ok_or_else(|| err(format!("missing '{k}'")))?;
            let (a, b) = v
                .split_once(',')
                .ok_or_else(|| err(format!("'{k}' needs x,y")))?;
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => Ok(Vec2::new(x, y)),
                _ => Err(err(format!("bad pair for '{k}'"))),
            }
        };
        let angle = || -> Result<f64> {
            Ok(if kv.contains_key("angle") {
                num("angle")?.to_radians()
            } else {
                0.0
            })
        };
        let label = kv.get("label").map(|s| s.to_string());
        let center = pair("center")?;
        let value = num("value")?;
        let shape = match kind {
            "disk" => Shape::Disk {
                center,
                radius: num("radius")?,
                value,
                label,
            },
            "annulus" => Shape::Annulus {
                center,
                inner: num("inner")?,
                outer: num("outer")?,
                value,
                label,
            },
            "ellipse" => Shape::Ellipse {
                center,
                radii: pair("radii")?,
                angle: angle()?,
                value,
                label,
            },
            "square" => Shape::Square {
                center,
                side: num("side")?,
                angle: angle()?,
                value,
                label,
            },
            "triangle" => Shape::Triangle {
                center,
                radius: num("radius")?,
                angle: angle()?,
                value,
                label,
            },
            "cross" => Shape::Cross {
                center,
                arm: num("arm")?,
                width: num("width")?,
                angle: angle()?,
                value,
                label,
            },
            other => return Err(err(format!("unknown shape '{other}'"))),
        };
        shapes.push(shape);
    }
    Ok(shapes)
}

/// Inverse of [`parse_shapes`].
pub fn format_shapes(shapes: &[Shape]) -> String {
    let mut out = String::new();
    for s in shapes {
        let c = s.center();
        let _ = write!(out, "{} center={},{}", s.kind(), c.x, c.y);
        match *s {
            Shape::Disk { radius, .. } => {
                let _ = write!(out, " radius={radius}");
            }
            Shape::Annulus { inner, outer, .. } => {
                let _ = write!(out, " inner={inner} outer={outer}");
            }
            Shape::Ellipse { radii, angle, .. } => {
                let _ = write!(
                    out,
                    " radii={},{} angle={}",
                    radii.x,
                    radii.y,
                    angle.to_degrees()
                );
            }
            Shape::Square { side, angle, .. } => {
                let _ = write!(out, " side={side} angle={}", angle.to_degrees());
            }
            Shape::Triangle { radius, angle, .. } => {
                let _ = write!(out, " radius={radius} angle={}", angle.to_degrees());
            }
            Shape::Cross {
                arm, width, angle, ..
            } => {
                let _ = write!(out, " arm={arm} width={width} angle={}", angle.to_degrees());
            }
        }
        let _ = write!(out, " value={}", s.value());
        if let Some(l) = s.label() {
            let _ = write!(out, " label={l}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_has_nine_ones() {
        let g = GridSpec::unit_ball(200);
        let img = Phantom::Delta { ix: 100, iy: 100 }.render(&g);
        assert_eq!(img.values.iter().filter(|&&v| v == 1.0).count(), 9);
        assert_eq!(img.values.iter().filter(|&&v| v != 0.0).count(), 9);
        assert_eq!(img.get(99, 101), 1.0);
        assert_eq!(img.get(102, 100), 0.0);
    }

    #[test]
    fn empty_custom_phantom_is_zero() {
        let g = GridSpec::unit_ball(16);
        assert!(Phantom::Custom(vec![])
            .render(&g)
            .values
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn ring_phantom_values() {
        let g = GridSpec::new(200, 100.0).unwrap();
        let img = Phantom::Ring.render(&g);
        // World (62.5, 0) sits in the j = 6 ring centred at (50, 0).
        let (ix, iy) = g.world_to_pixel(Vec2::new(62.5, 0.5)).unwrap();
        assert_eq!(img.get(ix, iy), 6.0);
        let (ix, iy) = g.world_to_pixel(Vec2::new(50.5, 0.5)).unwrap();
        assert_eq!(img.get(ix, iy), 0.0);
        for &v in &img.values {
            assert!(v == v.round() && (0.0..=6.0).contains(&v));
        }
        for j in 1..=6 {
            assert!(img.values.contains(&(j as f64)));
        }
        assert!(Phantom::Ring.fits_unit_ball());
    }

    #[test]
    fn bundled_tables_fit_and_have_metric_regions() {
        for p in [Phantom::Simple, Phantom::Complex] {
            assert!(p.fits_unit_ball());
        }
        let g = GridSpec::unit_ball(200);
        let shapes = Phantom::Complex.shapes();
        let img = Phantom::Complex.render(&g);
        for (label, truth) in [("T", 3.0), ("C", 4.0)] {
            let mask = region_mask(&shapes, label, &g).unwrap();
            let n = mask.iter().filter(|&&m| m).count();
            assert!(n > 100, "{label} region has {n} pixels");
            for (i, &m) in mask.iter().enumerate() {
                if m {
                    assert!(
                        (img.values[i] - truth).abs() < 1e-12,
                        "{label}: {}",
                        img.values[i]
                    );
                }
            }
        }
        assert!(img.min() >= 0.0);
        assert!(img.max() <= 4.0 + 1e-12);
        let simple = Phantom::Simple.render(&g);
        assert!(simple.values.contains(&2.0) && simple.values.contains(&1.0));
    }

    #[test]
    fn complex_pixels_sum_overlapping_shapes() {
        let g = GridSpec::unit_ball(64);
        let shapes = Phantom::Complex.shapes();
        let img = Phantom::Complex.render(&g);
        for iy in 0..g.n {
            for ix in 0..g.n {
                let p = g.pixel_center_unit(ix, iy);
                let expect: f64 = shapes
                    .iter()
                    .filter(|s| s.contains(p))
                    .map(|s| s.value())
                    .sum();
                assert_eq!(img.get(ix, iy), expect);
            }
        }
    }

    #[test]
    fn averaged_render_integrates_disk_area() {
        let g = GridSpec::unit_ball(128);
        let disk = [Shape::Disk {
            center: Vec2::new(0.1, -0.2),
            radius: 0.4,
            value: 2.0,
            label: None,
        }];
        let img = render_shapes_averaged(&disk, &g, 8);
        let d = g.delta();
        let mass: f64 = img.values.iter().sum::<f64>() * d * d;
        let exact = 2.0 * PI * 0.16;
        assert!((mass - exact).abs() / exact < 1e-3, "{mass} {exact}");
        assert!(img.values.iter().all(|&v| (0.0..=2.0).contains(&v)));
        assert_eq!(
            render_shapes_averaged(&disk, &g, 1).values,
            render_shapes(&disk, &g).values
        );
    }

    #[test]
    fn out_of_ball_shapes_flagged() {
        let p = Phantom::Custom(vec![Shape::Disk {
            center: Vec2::new(0.9, 0.0),
            radius: 0.2,
            value: 1.0,
            label: None,
        }]);
        assert!(!p.fits_unit_ball());
    }

    #[test]
    fn shape_membership() {
        let tri = Shape::Triangle {
            center: Vec2::ZERO,
            radius: 1.0,
            angle: 0.0,
            value: 1.0,
            label: None,
        };
        assert!(tri.contains(Vec2::new(0.0, 0.99)));
        assert!(!tri.contains(Vec2::new(0.0, 1.01)));
        assert!(tri.contains(Vec2::new(0.0, -0.49)));
        assert!(!tri.contains(Vec2::new(0.0, -0.51)));
        let cross = Shape::Cross {
            center: Vec2::ZERO,
            arm: 1.0,
            width: 0.2,
            angle: 0.0,
            value: 1.0,
            label: None,
        };
        assert!(cross.contains(Vec2::new(0.9, 0.1)));
        assert!(cross.contains(Vec2::new(0.1, -0.9)));
        assert!(!cross.contains(Vec2::new(0.5, 0.5)));
        let sq = Shape::Square {
            center: Vec2::ZERO,
            side: 1.0,
            angle: PI / 4.0,
            value: 1.0,
            label: None,
        };
        assert!(sq.contains(Vec2::new(0.0, 0.7)));
        assert!(!sq.contains(Vec2::new(0.45, 0.45)));
    }

    #[test]
    fn table_round_trip() {
        let shapes = Phantom::Complex.shapes();
        let text = format_shapes(&shapes);
        let back = parse_shapes(&text).unwrap();
        assert_eq!(back.len(), shapes.len());
        for (a, b) in shapes.iter().zip(&back) {
            assert_eq!(a.kind(), b.kind());
            assert_eq!(a.label(), b.label());
            assert!((a.center() - b.center()).norm() < 1e-12);
        }
    }

    #[test]
    fn parse_errors() {
        assert!(parse_shapes("blob center=0,0 value=1").is_err());
        assert!(parse_shapes("disk center=0 radius=1 value=1").is_err());
        assert!(parse_shapes("disk center=0,0 value=1").is_err());
        assert!(parse_shapes("disk center=0,0 radius=x value=1").is_err());
    }
}
