//! Closed-form toric-section integrals of disk and annulus phantoms.
//!
//! The integral of a disk indicator over an arc is the length of the arc
//! inside the disk: intersect the arc's angular interval on its circle with
//! the angular interval the disk cuts from that circle.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{wrap_pi, Arc, ToricSection, Vec2};
use crate::operator::{ScanGeometry, Sinogram};
use crate::phantom::Shape;

const TANGENCY_EPS: f64 = 1e-12;

/// A disk (`inner_radius = 0`) or annulus of constant density, in
/// detector-ring units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskSpec {
    pub center: Vec2,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub density: f64,
}

impl DiskSpec {
    pub fn new(center: Vec2, inner_radius: f64, outer_radius: f64, density: f64) -> Result<Self> {
        if !(inner_radius >= 0.0 && outer_radius > inner_radius) {
            return Err(Error::InvalidParameter(format!(
                "annulus needs 0 <= inner < outer (got {inner_radius}, {outer_radius})"
            )));
        }
        Ok(Self {
            center,
            inner_radius,
            outer_radius,
            density,
        })
    }

    /// Disk/annulus view of a phantom shape; other shapes are unsupported.
    pub fn from_shape(shape: &Shape) -> Result<Self> {
        match *shape {
            Shape::Disk {
                center,
                radius,
                value,
                ..
            } => Self::new(center, 0.0, radius, value),
            Shape::Annulus {
                center,
                inner,
                outer,
                value,
                ..
            } => Self::new(center, inner, outer, value),
            ref other => Err(Error::UnsupportedShape(other.kind().to_string())),
        }
    }
}

/// Half-width of the angular interval (seen from the circle centre `c`) of
/// the circle `|x - c| = r` that lies inside the disk `|x - p| <= radius`.
/// Returns `None` when the circle misses the disk and `Some(pi)` when the
/// whole circle is inside.
fn disk_window(c: Vec2, r: f64, p: Vec2, radius: f64) -> Option<(f64, f64)> {
    let d = c.dist(p);
    if d >= r + radius - TANGENCY_EPS {
        return None;
    }
    if d + r <= radius + TANGENCY_EPS {
        return Some((0.0, PI));
    }
    if d + radius <= r + TANGENCY_EPS {
        // Disk strictly inside the circle.
        return None;
    }
    let cos_half = ((d * d + r * r - radius * radius) / (2.0 * d * r)).clamp(-1.0, 1.0);
    Some(((p - c).angle(), cos_half.acos()))
}

/// Length of the overlap of two arcs of the unit circle `[m1 - h1, m1 + h1]`
/// and `[m2 - h2, m2 + h2]`, in radians.
fn angular_overlap(m1: f64, h1: f64, m2: f64, h2: f64) -> f64 {
    if h2 >= PI {
        return 2.0 * h1.min(PI);
    }
    if h1 >= PI {
        return 2.0 * h2;
    }
    let off = wrap_pi(m2 - m1);
    [-TAU, 0.0, TAU]
        .iter()
        .map(|shift| {
            let lo = (-h1).max(off + shift - h2);
            let hi = h1.min(off + shift + h2);
            (hi - lo).max(0.0)
        })
        .sum()
}

/// Length of arc `which` of `ts` inside the disk of radius `disk_radius`
/// centred at `disk_center` (detector-ring units).
pub fn arc_length_in_disk(
    ts: &ToricSection,
    which: Arc,
    disk_center: Vec2,
    disk_radius: f64,
) -> f64 {
    if !(disk_radius > 0.0) {
        return 0.0;
    }
    let c = ts.center(which);
    match disk_window(c, ts.r, disk_center, disk_radius) {
        None => 0.0,
        Some((mid, half)) => {
            let (am, ah) = ts.arc_interval(which);
            ts.r * angular_overlap(am, ah, mid, half)
        }
    }
}

/// Toric-section integral of a union of disks and annuli for one section.
pub fn section_integral(ts: &ToricSection, disks: &[DiskSpec]) -> f64 {
    disks
        .iter()
        .map(|d| {
            Arc::BOTH
                .iter()
                .map(|&which| {
                    arc_length_in_disk(ts, which, d.center, d.outer_radius)
                        - arc_length_in_disk(ts, which, d.center, d.inner_radius)
                })
                .sum::<f64>()
                * d.density
        })
        .sum()
}

/// Exact sinogram of a disk/annulus phantom. Shapes are in detector-ring
/// units; `length_scale` converts arc lengths to the caller's world units
/// (the grid's `unit`), so the result is comparable to a length-weighted
/// operator applied to the rasterized phantom.
pub fn analytic_sinogram(
    geom: &ScanGeometry,
    phantom: &[Shape],
    length_scale: f64,
) -> Result<Sinogram> {
    let disks = phantom
        .iter()
        .map(DiskSpec::from_shape)
        .collect::<Result<Vec<_>>>()?;
    let values = (0..geom.n_rows())
        .into_par_iter()
        .with_min_len(64)
        .map(|k| section_integral(&geom.section(k), &disks) * length_scale)
        .collect();
    Sinogram::from_values(geom.clone(), values)
}
