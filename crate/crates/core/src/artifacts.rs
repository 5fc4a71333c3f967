//! Predicted reconstruction artefacts.
//!
//! A singularity at `w` with direction `xi` is detected by the toric section
//! whose arc passes through `w` normal to `xi`. Because each section has two
//! arcs, backprojection spreads that singularity to a partner point on the
//! other arc. Everything here is in detector-ring units.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{theta, theta_alpha, Arc, ToricSection, Vec2};
use crate::grid::Image;

/// Direction of the artefact map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    C1ToC2,
    C2ToC1,
}

impl Branch {
    /// Arc carrying the source point.
    pub fn source_arc(self) -> Arc {
        match self {
            Branch::C1ToC2 => Arc::C1,
            Branch::C2ToC1 => Arc::C2,
        }
    }

    pub fn from_source(arc: Arc) -> Self {
        match arc {
            Arc::C1 => Branch::C1ToC2,
            Arc::C2 => Branch::C2ToC1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Branch::C1ToC2 => "C1->C2",
            Branch::C2ToC1 => "C2->C1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArtifactPoint {
    pub w: Vec2,
    pub xi_prime: Vec2,
    pub r: f64,
    pub alpha: f64,
    pub partner: Vec2,
    pub branch: Branch,
}

/// Radius `(|w|^2 + 3) / (2 w.xi')` of the toric section detecting `(w, xi')`.
///
/// `xi'` is flipped if needed so that `w.xi' > 0`; the oriented unit
/// direction is returned alongside the radius.
pub fn detecting_radius(w: Vec2, xi_prime: Vec2) -> Result<(f64, Vec2)> {
    let n = xi_prime.norm();
    if !(n > 0.0) {
        return Err(Error::DegenerateCovector);
    }
    let mut xi = xi_prime * (1.0 / n);
    let mut d = w.dot(xi);
    if d.abs() <= 1e-14 * w.norm().max(1e-300) || d == 0.0 {
        return Err(Error::TangentCovector);
    }
    if d < 0.0 {
        xi = -xi;
        d = -d;
    }
    Ok(((w.norm_sq() + 3.0) / (2.0 * d), xi))
}

/// Rotation angle of the section of radius `r` whose arc `branch` passes
/// through `w` with outward normal `xi'`: solves `w - r xi' = c_branch`.
pub fn detecting_angle(w: Vec2, xi_prime: Vec2, r: f64, branch: Arc) -> Result<f64> {
    if !(r > 2.0) {
        return Err(Error::DegenerateTorus(r));
    }
    let s = (r * r - 4.0).sqrt();
    let v = w - xi_prime * r;
    let k = 1.0 / (1.0 + s * s);
    // c1 = [[1,-s],[s,1]] theta and c2 = [[1,s],[-s,1]] theta.
    let th = match branch {
        Arc::C1 => Vec2::new(v.x + s * v.y, -s * v.x + v.y) * k,
        Arc::C2 => Vec2::new(v.x - s * v.y, s * v.x + v.y) * k,
    };
    Ok(th.angle())
}

/// Partner of `w` (on arc `branch.source_arc()` of section `(r, alpha)`)
/// on the other arc of the same section.
pub fn map_artifact(w: Vec2, r: f64, alpha: f64, branch: Branch) -> Result<Vec2> {
    let ts = ToricSection::new(r, alpha)?;
    let (th, tha) = (ts.theta(), ts.theta_alpha());
    let (wa, wt) = (w.dot(tha), w.dot(th));
    let k = 2.0 / ts.s;
    let coef = match branch {
        Branch::C1ToC2 => k * wa - wt,
        Branch::C2ToC1 => -k * wa - wt,
    };
    let u = tha * (-wa) + th * coef;
    let uu = u.norm_sq();
    if !(uu > 1e-28) {
        return Err(Error::DegenerateCovector);
    }
    let c = ts.center(branch.source_arc().other());
    let uc = u.dot(c);
    let nu = (uc + (uc * uc + 3.0 * uu).sqrt()) / uu;
    Ok(u * nu)
}

/// The artefact points of `(w, xi)`, one per branch.
pub fn predict_covector(w: Vec2, xi: Vec2) -> Result<Vec<ArtifactPoint>> {
    let (r, xi_prime) = detecting_radius(w, xi)?;
    Arc::BOTH
        .iter()
        .map(|&arc| {
            let alpha = detecting_angle(w, xi_prime, r, arc)?;
            let branch = Branch::from_source(arc);
            let partner = map_artifact(w, r, alpha, branch)?;
            Ok(ArtifactPoint {
                w,
                xi_prime,
                r,
                alpha,
                partner,
                branch,
            })
        })
        .collect()
}

/// One sample of an artefact curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// Rotation angle of the section (in the original frame).
    pub alpha: f64,
    pub r: f64,
    pub point: Vec2,
}

/// The two branches of the artefact curve of a point singularity.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaCurves {
    pub psi1: Vec<CurvePoint>,
    pub psi2: Vec<CurvePoint>,
}

impl DeltaCurves {
    pub fn points(&self) -> Vec<Vec2> {
        self.psi1
            .iter()
            .chain(&self.psi2)
            .map(|p| p.point)
            .collect()
    }
}

/// Samples `alpha = j pi / n` for `j = 1..=n` on `[0, pi]` (psi_1) and the
/// mirrored angles on `[-pi, 0]` (psi_2), computed in the frame where `x0`
/// sits on the negative x-axis and rotated back.
pub fn delta_artifact_curves(x0: Vec2, n_samples: usize) -> Result<DeltaCurves> {
    let a = x0.norm();
    if !(a > 1e-12) {
        return Err(Error::OriginDelta);
    }
    // Rotation taking the canonical frame (x0 at angle pi) to the original one.
    let rot = x0.angle() - PI;
    let xc = Vec2::new(-a, 0.0);
    let sample = |alpha: f64, source: Arc| -> Option<CurvePoint> {
        let th = theta(alpha);
        let tha = theta_alpha(alpha);
        let denom = 2.0 * xc.dot(tha);
        if denom.abs() < 1e-12 {
            return None;
        }
        let s = ((3.0 - a * a + 2.0 * xc.dot(th)) / denom).abs();
        if !(s > 0.0) || !s.is_finite() {
            return None;
        }
        let r = (s * s + 4.0).sqrt();
        let ts = ToricSection::new(r, alpha).ok()?;
        if !ts.contains(source, xc, 1e-9) {
            return None;
        }
        let p = map_artifact(xc, r, alpha, Branch::from_source(source)).ok()?;
        if !ts.contains(source.other(), p, 1e-8) {
            return None;
        }
        Some(CurvePoint {
            alpha: alpha + rot,
            r,
            point: p.rotate(rot),
        })
    };
    let js: Vec<usize> = (1..=n_samples).collect();
    let step = PI / n_samples as f64;
    // For alpha in (0, pi) the point lies on C2, so psi_1 lives on C1.
    let psi1 = js
        .par_iter()
        .filter_map(|&j| sample(j as f64 * step, Arc::C2))
        .collect();
    let psi2 = js
        .par_iter()
        .filter_map(|&j| sample(-(j as f64) * step, Arc::C1))
        .collect();
    Ok(DeltaCurves { psi1, psi2 })
}

/// Reflection across the line through the origin and `x0`.
pub fn reflect_through(x0: Vec2, p: Vec2) -> Vec2 {
    let u = x0.normalized();
    u * (2.0 * p.dot(u)) - p
}

/// How the artefact curve closes up inside the scanned region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Closure {
    /// Winding number about the origin of the polygon `psi1` then `psi2`
    /// reversed, closed by a straight segment.
    pub winding: i32,
    /// Largest gap between consecutive polygon vertices over the perimeter.
    pub gap_ratio: f64,
    /// Each branch stays in the region over a single run of angles.
    pub contiguous: bool,
}

impl Closure {
    /// A single loop around the scanned region's centre, as the cardioid is.
    pub fn is_closed(&self) -> bool {
        self.winding.abs() == 1 && self.contiguous
    }
}

/// Closure of the curve restricted to `|p| <= radius`.
pub fn closure(curves: &DeltaCurves, radius: f64) -> Closure {
    let inside = |p: &CurvePoint| p.point.norm() <= radius;
    let runs = |c: &[CurvePoint]| {
        let flags: Vec<bool> = c.iter().map(inside).collect();
        flags.windows(2).filter(|w| w[0] != w[1]).count()
            + usize::from(flags.first() == Some(&true))
    };
    let contiguous = runs(&curves.psi1) <= 2 && runs(&curves.psi2) <= 2;
    let pts: Vec<Vec2> = curves
        .psi1
        .iter()
        .filter(|p| inside(p))
        .chain(curves.psi2.iter().rev().filter(|p| inside(p)))
        .map(|p| p.point)
        .collect();
    if pts.len() < 3 {
        return Closure {
            winding: 0,
            gap_ratio: f64::INFINITY,
            contiguous,
        };
    }
    let n = pts.len();
    let mut turn = 0.0;
    let mut gaps = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        turn += crate::geometry::wrap_pi(b.angle() - a.angle());
        gaps.push(a.dist(b));
    }
    let perimeter: f64 = gaps.iter().sum();
    Closure {
        winding: (turn / std::f64::consts::TAU).round() as i32,
        gap_ratio: gaps.iter().copied().fold(0.0, f64::max) / perimeter,
        contiguous,
    }
}

/// Half-width in pixels of the window a ridge pixel is compared against.
pub const RIDGE_WINDOW: usize = 6;
/// Fraction of the neighbourhood maximum a ridge pixel must reach.
pub const RIDGE_FRACTION: f64 = 0.7;

/// Fraction of predicted points within two pixels of a ridge pixel.
///
/// A ridge pixel lies outside the exclusion disk around `center` and holds
/// at least `RIDGE_FRACTION` of the maximum of its `(2 RIDGE_WINDOW + 1)`-square
/// neighbourhood (excluded pixels left out) and at least 1% of the maximum
/// outside the disk. Predicted points off the grid or inside the exclusion
/// disk are not scored. Positions are in detector-ring units.
pub fn overlay_score(
    predicted: &[Vec2],
    backprojection: &Image,
    center: Vec2,
    exclusion_radius: f64,
) -> Result<f64> {
    overlay_score_with(
        predicted,
        backprojection,
        center,
        exclusion_radius,
        RIDGE_WINDOW,
        RIDGE_FRACTION,
    )
}

/// `overlay_score` with an explicit window half-width and fraction.
pub fn overlay_score_with(
    predicted: &[Vec2],
    backprojection: &Image,
    center: Vec2,
    exclusion_radius: f64,
    window: usize,
    frac: f64,
) -> Result<f64> {
    let g = &backprojection.grid;
    let n = g.n;
    let excluded: Vec<bool> = (0..g.len())
        .map(|i| {
            let (ix, iy) = g.coords(i);
            g.pixel_center_unit(ix, iy).dist(center) <= exclusion_radius
        })
        .collect();
    let vals = &backprojection.values;
    let peak = vals
        .iter()
        .zip(&excluded)
        .filter(|(_, &e)| !e)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = 0.01 * peak;
    let ridge = |ix: usize, iy: usize| {
        let i = g.index(ix, iy);
        if excluded[i] || !(vals[i] >= floor) {
            return false;
        }
        let (lo_x, hi_x) = (ix.saturating_sub(window), (ix + window).min(n - 1));
        let (lo_y, hi_y) = (iy.saturating_sub(window), (iy + window).min(n - 1));
        let local = (lo_y..=hi_y)
            .flat_map(|y| (lo_x..=hi_x).map(move |x| (x, y)))
            .map(|(x, y)| g.index(x, y))
            .filter(|&j| !excluded[j])
            .map(|j| vals[j])
            .fold(f64::NEG_INFINITY, f64::max);
        vals[i] >= frac * local
    };
    let tol = 2.0 * g.delta() / g.unit;
    let mut scored = 0usize;
    let mut hits = 0usize;
    for &p in predicted {
        if p.dist(center) <= exclusion_radius {
            continue;
        }
        let Some((px, py)) = g.world_to_pixel(p * g.unit) else {
            continue;
        };
        scored += 1;
        let (lo_x, hi_x) = (px.saturating_sub(2), (px + 2).min(n - 1));
        let (lo_y, hi_y) = (py.saturating_sub(2), (py + 2).min(n - 1));
        let hit = (lo_y..=hi_y).any(|iy| {
            (lo_x..=hi_x).any(|ix| g.pixel_center_unit(ix, iy).dist(p) <= tol && ridge(ix, iy))
        });
        if hit {
            hits += 1;
        }
    }
    if scored == 0 {
        return Err(Error::EmptyPrediction);
    }
    Ok(hits as f64 / scored as f64)
}

/// Pixels containing the given points (detector-ring units), for burning
/// predictions into an overlay image.
pub fn burn_marks(grid: &crate::grid::GridSpec, points: &[Vec2]) -> Vec<(usize, usize)> {
    let mut marks: Vec<(usize, usize)> = points
        .iter()
        .filter_map(|&p| grid.world_to_pixel(p * grid.unit))
        .collect();
    marks.sort_unstable();
    marks.dedup();
    marks
}
