//! Continuous geometry of toric sections.
//!
//! All lengths are in detector-ring units: the detector ring is the unit
//! circle and the source ring has radius 3. A toric section with parameters
//! `(r, alpha)` is the union of two circular arcs of radius `r` that meet at
//! the tips `-theta(alpha)` (detector) and `3 theta(alpha)` (source).

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Radius of the source ring in detector-ring units.
pub const SOURCE_RING_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at angle `a`.
    pub fn polar(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Self { x: c, y: s }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Counter-clockwise rotation by `a` radians.
    pub fn rotate(self, a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Self {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }

    /// The vector rotated a quarter turn counter-clockwise.
    pub fn perp(self) -> Self {
        Self {
            x: -self.y,
            y: self.x,
        }
    }

    pub fn normalized(self) -> Self {
        self * (1.0 / self.norm())
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// `theta(alpha) = (cos alpha, sin alpha)`.
pub fn theta(alpha: f64) -> Vec2 {
    Vec2::polar(alpha)
}

/// `theta_alpha(alpha)`: the unit vector a quarter turn CCW from `theta(alpha)`.
pub fn theta_alpha(alpha: f64) -> Vec2 {
    Vec2::polar(alpha).perp()
}

/// Wraps an angle into `[0, 2pi)`.
pub fn normalize_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_pi(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Which of the two arcs of a toric section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arc {
    /// Arc centred at `theta + s theta_alpha`, lying in `x . theta_alpha <= 0`.
    C1,
    /// Arc centred at `theta - s theta_alpha`, lying in `x . theta_alpha >= 0`.
    C2,
}

impl Arc {
    pub const BOTH: [Arc; 2] = [Arc::C1, Arc::C2];

    pub fn other(self) -> Arc {
        match self {
            Arc::C1 => Arc::C2,
            Arc::C2 => Arc::C1,
        }
    }
}

/// One scan configuration `(r, alpha)` with its derived geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToricSection {
    pub r: f64,
    pub alpha: f64,
    /// Tube centre offset `sqrt(r^2 - 4)`.
    pub s: f64,
    /// Axis parameter `sqrt(r^2 - 3)`, also `|c1| = |c2|`.
    pub t: f64,
    /// Half-opening angle `arccos(1/t)` of the section seen from the origin.
    pub alpha_t: f64,
    pub c1: Vec2,
    pub c2: Vec2,
}

impl ToricSection {
    pub fn new(r: f64, alpha: f64) -> Result<Self> {
        if !(r > 2.0) || !r.is_finite() {
            return Err(Error::DegenerateTorus(r));
        }
        let alpha = normalize_angle(alpha);
        let s = (r * r - 4.0).sqrt();
        let t = (r * r - 3.0).sqrt();
        let th = theta(alpha);
        let tha = theta_alpha(alpha);
        Ok(Self {
            r,
            alpha,
            s,
            t,
            alpha_t: (1.0 / t).acos(),
            c1: th + tha * s,
            c2: th - tha * s,
        })
    }

    pub fn theta(&self) -> Vec2 {
        theta(self.alpha)
    }

    pub fn theta_alpha(&self) -> Vec2 {
        theta_alpha(self.alpha)
    }

    pub fn center(&self, which: Arc) -> Vec2 {
        match which {
            Arc::C1 => self.c1,
            Arc::C2 => self.c2,
        }
    }

    /// Tips shared by both arcs: `-theta` on the detector ring and `3 theta` on the source ring.
    pub fn tips(&self) -> [Vec2; 2] {
        let th = self.theta();
        [-th, th * SOURCE_RING_RADIUS]
    }

    /// Point `c_which + r (cos beta, sin beta)` on the full circle carrying the arc.
    pub fn arc_point(&self, which: Arc, beta: f64) -> Vec2 {
        self.center(which) + Vec2::polar(beta) * self.r
    }

    /// Half-plane test for arc membership (non-strict, so the tips belong to both arcs).
    pub fn in_half_plane(&self, which: Arc, p: Vec2) -> bool {
        let d = p.dot(self.theta_alpha());
        match which {
            Arc::C1 => d <= 0.0,
            Arc::C2 => d >= 0.0,
        }
    }

    /// Whether `p` lies on the arc, with tolerance `tol` on the circle equation
    /// and on the half-plane sign.
    pub fn contains(&self, which: Arc, p: Vec2, tol: f64) -> bool {
        let on_circle = (p.dist(self.center(which)) - self.r).abs() <= tol;
        let d = p.dot(self.theta_alpha());
        let side = match which {
            Arc::C1 => d <= tol,
            Arc::C2 => d >= -tol,
        };
        on_circle && side
    }

    /// The arc as an angular interval `(mid, half_width)` in the circle
    /// parameter `beta`: the arc is `beta in [mid - half_width, mid + half_width]`.
    pub fn arc_interval(&self, which: Arc) -> (f64, f64) {
        let half = (self.s / self.r).clamp(-1.0, 1.0).acos();
        let mid = match which {
            Arc::C1 => self.alpha - FRAC_PI_2,
            Arc::C2 => self.alpha + FRAC_PI_2,
        };
        (mid, half)
    }

    /// Length of one arc (both arcs have the same length).
    pub fn arc_length(&self) -> f64 {
        let (_, half) = self.arc_interval(Arc::C1);
        2.0 * self.r * half
    }
}

/// Radius of the toric section in polar form around the origin.
///
/// `rho(phi) = sqrt(t^2 cos^2 phi + 3) - t cos phi` for `|phi| <= arccos(1/t)`,
/// where `phi` is measured from the direction pointing away from the arc centre.
pub fn polar_rho(t: f64, phi: f64) -> Result<f64> {
    check_polar_domain(t, phi)?;
    let tc = t * phi.cos();
    Ok((tc * tc + 3.0).sqrt() - tc)
}

/// Arc-length density `ds/dphi` of the polar parametrisation:
/// `r (1 - t cos phi / sqrt(t^2 cos^2 phi + 3))` with `r = sqrt(t^2 + 3)`.
pub fn arc_measure_weight(t: f64, phi: f64) -> Result<f64> {
    check_polar_domain(t, phi)?;
    let r = (t * t + 3.0).sqrt();
    let tc = t * phi.cos();
    Ok(r * (1.0 - tc / (tc * tc + 3.0).sqrt()))
}

fn check_polar_domain(t: f64, phi: f64) -> Result<()> {
    if !(t >= 1.0) {
        return Err(Error::GeometryOutOfRange(format!(
            "axis parameter t = {t} must be >= 1"
        )));
    }
    let limit = (1.0 / t).acos();
    // Allow rounding slack at the endpoints.
    if phi.abs() > limit + 1e-12 {
        return Err(Error::OutsideArcSupport { phi, limit });
    }
    Ok(())
}

/// Compton scattering angle and torus radius for a measured energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterGeometry {
    /// Scattering angle in radians.
    pub omega: f64,
    pub cos_omega: f64,
    /// Toric-section radius `2 / sin(omega)`.
    pub r: f64,
}

/// Solves the Compton relation `E' = E / (1 + (E/E0)(1 - cos omega))` for
/// the scattering angle and returns the matching toric-section radius.
pub fn energy_to_radius(e: f64, e_prime: f64, e0: f64) -> Result<ScatterGeometry> {
    if !(e_prime > 0.0 && e_prime < e) || !(e0 > 0.0) {
        return Err(Error::GeometryOutOfRange(format!(
            "need 0 < E' < E and E0 > 0 (E = {e}, E' = {e_prime}, E0 = {e0})"
        )));
    }
    let cos_omega = 1.0 - (e0 / e_prime) * (1.0 - e_prime / e);
    radius_from_cos_omega(cos_omega)
}

/// Torus radius `2 / sin(omega)` for `cos omega` in `(0, 1)`.
pub fn radius_from_cos_omega(cos_omega: f64) -> Result<ScatterGeometry> {
    if !(cos_omega > 0.0 && cos_omega < 1.0) {
        return Err(Error::GeometryOutOfRange(format!(
            "cos(omega) = {cos_omega} outside (0, 1)"
        )));
    }
    let sin_omega = (1.0 - cos_omega * cos_omega).sqrt();
    Ok(ScatterGeometry {
        omega: cos_omega.acos(),
        cos_omega,
        r: 2.0 / sin_omega,
    })
}

/// A point together with a direction, used to locate reconstruction artefacts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covector {
    pub w: Vec2,
    pub xi: Vec2,
    /// `xi / |xi|`.
    pub xi_prime: Vec2,
}

impl Covector {
    pub fn new(w: Vec2, xi: Vec2) -> Result<Self> {
        let n = xi.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidParameter(
                "covector direction must be nonzero".into(),
            ));
        }
        Ok(Self {
            w,
            xi,
            xi_prime: xi * (1.0 / n),
        })
    }
}
