//! Fourier-space consistency check of the toric section transform.
//!
//! Expanding the image as `F(rho, alpha) = sum_l F_l(rho) e^{i l alpha}` and
//! the data as `Tf(t, alpha) = sum_l (Tf)_l(t) e^{i l alpha}`, rotation
//! invariance decouples the orders, and each one satisfies an Abel-type
//! equation with a Chebyshev kernel:
//!
//! ```text
//! (Tf)_l(t) / (4 r) = (-1)^l T_|l|(1/t) int_1^t Ft_l(rho) T_|l|(rho/t) / sqrt(t^2 - rho^2) drho
//! Ft_l(u) = (1 - u / sqrt(u^2 + 3)) F_l(sqrt(u^2 + 3) - u)
//! ```
//!
//! with `t = sqrt(r^2 - 3)`. Derivation sketch: in polar coordinates around
//! the origin an arc is `rho(phi) = sqrt(t^2 cos^2 phi + 3) - t cos phi`
//! (phi from the direction away from its centre) with arc measure
//! `ds = r (1 - t cos phi / sqrt(t^2 cos^2 phi + 3)) dphi`, so
//! `|x|^2` (not `|x|`) enters under the square root of the inner radius map,
//! and the substitution that removes the endpoint singularity is
//! `rho = t cos v`. The sign `(-1)^l` appears because the arcs here face
//! away from `theta(alpha)` (the detector tip is `-theta(alpha)`), a half
//! turn from the frame in which the identity is usually written.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{theta, Vec2};
use crate::grid::Image;
use crate::operator::{ScanGeometry, Sinogram, SparseOperator};

/// Chebyshev polynomial of the first kind `T_n(x)` by the three-term recurrence.
pub fn chebyshev(n: u32, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut a, mut b) = (1.0, x);
            for _ in 1..n {
                let c = 2.0 * x * b - a;
                a = b;
                b = c;
            }
            b
        }
    }
}

/// Samples of one Fourier order as a function of a radial abscissa.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarCoeffSeries {
    pub order: i32,
    pub samples: Vec<(f64, Complex64)>,
}

impl PolarCoeffSeries {
    pub fn new(order: i32, samples: Vec<(f64, Complex64)>) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidParameter(
                "series abscissae must be strictly increasing".into(),
            ));
        }
        Ok(Self { order, samples })
    }
}

/// `F_l(rho) = (1/2pi) int F(rho theta(alpha)) e^{-i l alpha} dalpha` by the
/// trapezoidal rule on `n_angular` equispaced angles.
pub fn polar_coefficient(
    f: &(dyn Fn(Vec2) -> f64 + Sync),
    l: i32,
    rho: f64,
    n_angular: usize,
) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..n_angular {
        let a = TAU * k as f64 / n_angular as f64;
        acc += Complex64::from_polar(f(theta(a) * rho), -(l as f64) * a);
    }
    acc / n_angular as f64
}

pub fn polar_fourier_image(
    f: &(dyn Fn(Vec2) -> f64 + Sync),
    l: i32,
    rho_grid: &[f64],
    n_angular: usize,
) -> Result<PolarCoeffSeries> {
    let need = 8 * l.unsigned_abs() as usize + 16;
    if n_angular < need {
        return Err(Error::CoarseLattice(format!(
            "order {l} needs at least {need} angles, got {n_angular}"
        )));
    }
    let samples = rho_grid
        .par_iter()
        .map(|&rho| (rho, polar_coefficient(f, l, rho, n_angular)))
        .collect();
    PolarCoeffSeries::new(l, samples)
}

/// Checks that the angles are an equispaced lattice covering the full circle.
fn check_uniform(alphas: &[f64]) -> Result<()> {
    let n = alphas.len();
    if n < 2 {
        return Err(Error::NonUniformLattice);
    }
    let mut a: Vec<f64> = alphas.iter().map(|x| x.rem_euclid(TAU)).collect();
    a.sort_by(f64::total_cmp);
    let step = TAU / n as f64;
    for i in 0..n {
        let next = if i + 1 < n { a[i + 1] } else { a[0] + TAU };
        if (next - a[i] - step).abs() > 1e-9 {
            return Err(Error::NonUniformLattice);
        }
    }
    Ok(())
}

/// `(Tf)_l(t)` at every radius of the sinogram, ordered by `t = sqrt(r^2 - 3)`
/// (detector-ring units). Values keep the sinogram's length units.
pub fn sinogram_fourier(sino: &Sinogram, l: i32) -> Result<PolarCoeffSeries> {
    let geom = &sino.geom;
    check_uniform(&geom.alphas)?;
    let n_alpha = geom.alphas.len();
    let mut samples: Vec<(f64, Complex64)> = (0..geom.radii.len())
        .map(|ri| {
            let r = geom.unit_radius(ri);
            let mut acc = Complex64::new(0.0, 0.0);
            for (ai, &a) in geom.alphas.iter().enumerate() {
                acc += Complex64::from_polar(sino.get(ri, ai), -(l as f64) * a);
            }
            ((r * r - 3.0).sqrt(), acc / n_alpha as f64)
        })
        .collect();
    samples.sort_by(|x, y| x.0.total_cmp(&y.0));
    PolarCoeffSeries::new(l, samples)
}

/// `Ft_l(u) = (1 - u/sqrt(u^2+3)) F_l(sqrt(u^2+3) - u)`.
pub fn tilde_value(f_l: &dyn Fn(f64) -> Complex64, u: f64) -> Complex64 {
    let q = (u * u + 3.0).sqrt();
    f_l(q - u) * (1.0 - u / q)
}

pub fn tilde_transform(
    f_l: &dyn Fn(f64) -> Complex64,
    order: i32,
    u_grid: &[f64],
) -> Result<PolarCoeffSeries> {
    PolarCoeffSeries::new(
        order,
        u_grid.iter().map(|&u| (u, tilde_value(f_l, u))).collect(),
    )
}

fn simpson<F: Fn(f64) -> Complex64>(
    f: &F,
    a: f64,
    b: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
    tol: f64,
    depth: u32,
) -> Complex64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (fa + flm * 4.0 + fm) * ((m - a) / 6.0);
    let right = (fm + frm * 4.0 + fb) * ((b - m) / 6.0);
    let diff = left + right - whole;
    if depth == 0 || diff.norm() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of a complex integrand to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, tol: f64) -> Complex64 {
    if b <= a {
        return Complex64::new(0.0, 0.0);
    }
    // Start from a few panels so narrow features are not missed.
    let panels = 8;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let (x0, x1) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            let whole = (f0 + fm * 4.0 + f1) * (h / 6.0);
            simpson(&f, x0, x1, f0, fm, f1, whole, tol / panels as f64, 40)
        })
        .sum()
}

/// `T_|l|(1/t) int_0^{arccos(1/t)} Ft_l(t cos v) T_|l|(cos v) dv`, the
/// right-hand side of the order-`l` identity after `rho = t cos v`.
pub fn abel_chebyshev_rhs(ftilde: &dyn Fn(f64) -> Complex64, l: i32, t: f64) -> Result<Complex64> {
    if !(t > 1.0) {
        return Err(Error::GeometryOutOfRange(format!("t = {t} must exceed 1")));
    }
    let n = l.unsigned_abs();
    let end = (1.0 / t).acos();
    let integral = integrate(
        |v| ftilde(t * v.cos()) * chebyshev(n, v.cos()),
        0.0,
        end,
        1e-8,
    );
    Ok(integral * chebyshev(n, 1.0 / t))
}

/// One `(l, t)` comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyRow {
    pub l: i32,
    pub t: f64,
    /// `(Tf)_l(t) / (4r)` from the data.
    pub lhs: Complex64,
    /// `(-1)^l` times [`abel_chebyshev_rhs`] from the image.
    pub rhs: Complex64,
    /// `|lhs - rhs|` over the largest `|rhs|` of the same order.
    pub mismatch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub rows: Vec<ConsistencyRow>,
    pub max_mismatch: f64,
}

impl ConsistencyReport {
    pub fn max_for(&self, l: i32) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.l == l)
            .map(|r| r.mismatch)
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("l,t,lhs_re,lhs_im,rhs_re,rhs_im,mismatch\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e},{:e}\n",
                r.l, r.t, r.lhs.re, r.lhs.im, r.rhs.re, r.rhs.im, r.mismatch
            ));
        }
        s
    }
}

/// Compares both sides of the identity for each order in `l_set` at every
/// radius of `sino`. `f` is the image as a function of detector-ring
/// coordinates; sinogram values are divided by `length_scale` to bring
/// them to detector-ring units.
pub fn consistency_from_parts(
    sino: &Sinogram,
    f: &(dyn Fn(Vec2) -> f64 + Sync),
    l_set: &[i32],
    length_scale: f64,
) -> Result<ConsistencyReport> {
    let n_alpha = sino.geom.alphas.len();
    let l_max = l_set
        .iter()
        .map(|l| l.unsigned_abs() as usize)
        .max()
        .unwrap_or(0);
    if n_alpha < 8 * l_max + 16 {
        return Err(Error::CoarseLattice(format!(
            "{n_alpha} angles cannot resolve order {l_max} (need {})",
            8 * l_max + 16
        )));
    }
    if sino.geom.radii.is_empty() {
        return Err(Error::CoarseLattice("no radii".into()));
    }
    let n_ang = n_alpha.max(8 * l_max + 16);
    let mut rows = Vec::new();
    for &l in l_set {
        let lhs = sinogram_fourier(sino, l)?;
        let sign = if l.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let f_l = |rho: f64| polar_coefficient(f, l, rho, n_ang);
        let part: Vec<(f64, Complex64, Complex64)> = lhs
            .samples
            .par_iter()
            .map(|&(t, v)| {
                let r = (t * t + 3.0).sqrt();
                let rhs = abel_chebyshev_rhs(&|u| tilde_value(&f_l, u), l, t)? * sign;
                Ok((t, v / (4.0 * r * length_scale), rhs))
            })
            .collect::<Result<_>>()?;
        let scale = part.iter().map(|p| p.2.norm()).fold(0.0, f64::max);
        for (t, lhs, rhs) in part {
            let diff = (lhs - rhs).norm();
            let mismatch = if scale > 0.0 { diff / scale } else { diff };
            rows.push(ConsistencyRow {
                l,
                t,
                lhs,
                rhs,
                mismatch,
            });
        }
    }
    let max_mismatch = rows.iter().map(|r| r.mismatch).fold(0.0, f64::max);
    Ok(ConsistencyReport { rows, max_mismatch })
}

/// Data side from the discrete operator applied to the image, image side from
/// bilinear interpolation of the same image.
pub fn consistency_check(
    op: &SparseOperator,
    geom: &ScanGeometry,
    image: &Image,
    l_set: &[i32],
) -> Result<ConsistencyReport> {
    let values = op.apply(&image.values)?;
    let sino = Sinogram::from_values(geom.clone(), values)?;
    let unit = image.grid.unit;
    let f = |p: Vec2| image.sample_bilinear(p * unit);
    consistency_from_parts(&sino, &f, l_set, unit)
}

/// Radii (detector-ring units) whose `t = sqrt(r^2 - 3)` values are `t_values`.
pub fn radii_for_t(t_values: &[f64]) -> Vec<f64> {
    t_values.iter().map(|t| (t * t + 3.0).sqrt()).collect()
}

/// Smooth cutoff: 1 for `x <= a`, 0 for `x >= b`, C-infinity in between.
pub fn smooth_step_down(x: f64, a: f64, b: f64) -> f64 {
    if x <= a {
        return 1.0;
    }
    if x >= b {
        return 0.0;
    }
    let bump = |y: f64| if y > 0.0 { (-1.0 / y).exp() } else { 0.0 };
    let s = (x - a) / (b - a);
    bump(1.0 - s) / (bump(1.0 - s) + bump(s))
}

/// A smooth radial annulus between radii `0.3` and `0.6` with soft edges.
pub fn mollified_annulus(p: Vec2) -> f64 {
    let rho = p.norm();
    (1.0 - smooth_step_down(rho, 0.2, 0.35)) * smooth_step_down(rho, 0.55, 0.7)
}

/// A smooth asymmetric test image: three Gaussian bumps under a smooth
/// cutoff that vanishes outside `|x| = 0.9`.
pub fn mollified_bumps(p: Vec2) -> f64 {
    let bumps = [
        (Vec2::new(0.35, 0.1), 0.12, 1.0),
        (Vec2::new(-0.3, 0.3), 0.09, 0.7),
        (Vec2::new(0.05, -0.45), 0.15, 1.3),
    ];
    let v: f64 = bumps
        .iter()
        .map(|&(c, sigma, a)| a * (-(p - c).norm_sq() / (2.0 * sigma * sigma)).exp())
        .sum();
    v * smooth_step_down(p.norm(), 0.75, 0.9)
}

/// Orders `0..=l_max` as a list.
pub fn orders(l_max: i32) -> Vec<i32> {
    (0..=l_max).collect()
}
