//! Regularized least-squares reconstruction.
//!
//! All three methods minimize `||A v - b||^2 + lambda^2 G(v)`:
//! Landweber and CGLS with `G = ||v||^2`, and the heuristic TV method with a
//! smoothed isotropic total variation solved by lagged diffusivity.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Image};
use crate::operator::SparseOperator;

/// Anything that can be applied forward and transposed.
pub trait LinearOperator: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;
    fn apply_transpose(&self, b: &[f64]) -> Result<Vec<f64>>;
}

impl LinearOperator for SparseOperator {
    fn n_rows(&self) -> usize {
        SparseOperator::n_rows(self)
    }
    fn n_cols(&self) -> usize {
        SparseOperator::n_cols(self)
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        SparseOperator::apply(self, v)
    }
    fn apply_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        SparseOperator::apply_transpose(self, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Landweber,
    CglsTikhonov,
    Htv,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "landweber" => Ok(Method::Landweber),
            "cgls" | "cgls_tikhonov" => Ok(Method::CglsTikhonov),
            "htv" => Ok(Method::Htv),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Landweber => "landweber",
            Method::CglsTikhonov => "cgls",
            Method::Htv => "htv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub lambda: f64,
    /// Iterations (outer iterations for htv).
    pub max_iters: usize,
    /// Inner CGLS iterations per htv outer step.
    pub inner_iters: usize,
    pub rel_tol: f64,
    pub nonneg: bool,
    /// TV smoothing; `None` picks `1e-3 * max` of the normalized backprojection.
    pub tv_tau: Option<f64>,
    /// Landweber step; `None` uses `1.8 / sigma_max^2`.
    pub step: Option<f64>,
    /// Starting iterate; zero when absent.
    pub initial: Option<Vec<f64>>,
}

impl SolverConfig {
    pub fn new(method: Method, lambda: f64) -> Self {
        let max_iters = match method {
            Method::Landweber => 500,
            Method::CglsTikhonov => 100,
            Method::Htv => 15,
        };
        Self {
            method,
            lambda,
            max_iters,
            inner_iters: 30,
            rel_tol: 1e-6,
            nonneg: method == Method::Htv,
            tv_tau: None,
            step: None,
            initial: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be >= 0 (got {})",
                self.lambda
            )));
        }
        if let Some(t) = self.tv_tau {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "tv_tau must be > 0 (got {t})"
                )));
            }
        }
        if let Some(w) = self.step {
            if !(w > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "step must be > 0 (got {w})"
                )));
            }
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::InvalidParameter("rel_tol must be >= 0".into()));
        }
        if self.method == Method::Htv && self.lambda == 0.0 {
            return Err(Error::InvalidParameter("htv needs lambda > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconResult {
    pub solution: Vec<f64>,
    /// `||A v_k - b||` after each iteration.
    pub residual_history: Vec<f64>,
    /// Value of the minimized functional after each iteration.
    pub objective_history: Vec<f64>,
    pub iterations_used: usize,
    /// CGLS met zero curvature before converging.
    pub breakdown: bool,
}

impl ReconResult {
    pub fn image(&self, grid: GridSpec) -> Result<Image> {
        Image::from_values(grid, self.solution.clone())
    }
}

/// Dispatches on `config.method`.
pub fn reconstruct<O: LinearOperator>(
    a: &O,
    b: &[f64],
    config: &SolverConfig,
    grid: &GridSpec,
) -> Result<ReconResult> {
    match config.method {
        Method::Landweber => landweber(a, b, config),
        Method::CglsTikhonov => cgls_tikhonov(a, b, config),
        Method::Htv => htv(a, b, config, grid),
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn project_nonneg(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn check_dims<O: LinearOperator>(a: &O, b: &[f64], initial: Option<&Vec<f64>>) -> Result<Vec<f64>> {
    if b.len() != a.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: a.n_rows(),
            got: b.len(),
        });
    }
    match initial {
        Some(v) if v.len() != a.n_cols() => Err(Error::DimensionMismatch {
            expected: a.n_cols(),
            got: v.len(),
        }),
        Some(v) => Ok(v.clone()),
        None => Ok(vec![0.0; a.n_cols()]),
    }
}

fn residual<O: LinearOperator>(a: &O, v: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let av = a.apply(v)?;
    Ok(b.iter().zip(&av).map(|(bi, ai)| bi - ai).collect())
}

/// Largest eigenvalue of `A^T A` by `iters` power iterations from a constant vector.
pub fn power_iteration<O: LinearOperator>(a: &O, iters: usize) -> Result<f64> {
    let n = a.n_cols();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lam = 0.0;
    for _ in 0..iters {
        let w = a.apply_transpose(&a.apply(&v)?)?;
        let nw = norm(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        lam = dot(&v, &w);
        v = w.into_iter().map(|x| x / nw).collect();
    }
    Ok(lam)
}

/// Counts consecutive residual increases and raises a divergence error at five.
struct DivergenceGuard {
    rising: usize,
}

impl DivergenceGuard {
    fn check(&mut self, trace: &[f64]) -> Result<()> {
        let n = trace.len();
        if n >= 2 && !trace[n - 1].is_finite() {
            return Err(Error::Divergence {
                iteration: n,
                trace: trace.to_vec(),
            });
        }
        if n >= 2 && trace[n - 1] > trace[n - 2] {
            self.rising += 1;
        } else {
            self.rising = 0;
        }
        if self.rising >= 5 {
            return Err(Error::Divergence {
                iteration: n,
                trace: trace.to_vec(),
            });
        }
        Ok(())
    }
}

/// Projected Landweber: `v <- P(v + w (A^T (b - A v) - lambda^2 v))`.
pub fn landweber<O: LinearOperator>(
    a: &O,
    b: &[f64],
    config: &SolverConfig,
) -> Result<ReconResult> {
    config.validate()?;
    let mut v = check_dims(a, b, config.initial.as_ref())?;
    let lam2 = config.lambda * config.lambda;
    let omega = match config.step {
        Some(w) => w,
        None => {
            let smax2 = power_iteration(a, 30)? + lam2;
            if smax2 == 0.0 {
                return Err(Error::InvalidParameter("operator is zero".into()));
            }
            1.8 / smax2
        }
    };
    if config.nonneg {
        project_nonneg(&mut v);
    }
    let mut res_hist = Vec::new();
    let mut obj_hist = Vec::new();
    let mut guard = DivergenceGuard { rising: 0 };
    let mut r = residual(a, &v, b)?;
    let mut prev = norm(&r);
    for _ in 0..config.max_iters {
        if prev == 0.0 && lam2 == 0.0 {
            break;
        }
        let g = a.apply_transpose(&r)?;
        for (vi, gi) in v.iter_mut().zip(&g) {
            *vi += omega * (gi - lam2 * *vi);
        }
        if config.nonneg {
            project_nonneg(&mut v);
        }
        r = residual(a, &v, b)?;
        let rn = norm(&r);
        res_hist.push(rn);
        obj_hist.push(rn * rn + lam2 * dot(&v, &v));
        guard.check(&res_hist)?;
        let change = (prev - rn).abs() / prev.max(f64::MIN_POSITIVE);
        prev = rn;
        if change < config.rel_tol {
            break;
        }
    }
    Ok(ReconResult {
        solution: v,
        iterations_used: res_hist.len(),
        residual_history: res_hist,
        objective_history: obj_hist,
        breakdown: false,
    })
}

struct CglsRun {
    x: Vec<f64>,
    residuals: Vec<f64>,
    augmented: Vec<f64>,
    breakdown: bool,
}

/// CGLS for `min ||A x - b||^2 + damp^2 ||x||^2` started at `x`.
fn cgls_core<O: LinearOperator>(
    a: &O,
    b: &[f64],
    mut x: Vec<f64>,
    damp: f64,
    iters: usize,
    rel_tol: f64,
) -> Result<CglsRun> {
    let d2 = damp * damp;
    let mut r = residual(a, &x, b)?;
    let mut s = a.apply_transpose(&r)?;
    for (si, xi) in s.iter_mut().zip(&x) {
        *si -= d2 * xi;
    }
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let gamma0 = gamma;
    let mut residuals = Vec::new();
    let mut augmented = Vec::new();
    let mut breakdown = false;
    let mut prev_aug = (dot(&r, &r) + d2 * dot(&x, &x)).sqrt();
    for _ in 0..iters {
        if gamma == 0.0 || gamma.sqrt() <= 1e-14 * gamma0.sqrt() {
            break;
        }
        let q = a.apply(&p)?;
        let delta = dot(&q, &q) + d2 * dot(&p, &p);
        if !(delta > 0.0) {
            breakdown = true;
            break;
        }
        let alpha = gamma / delta;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= alpha * qi;
        }
        s = a.apply_transpose(&r)?;
        for (si, xi) in s.iter_mut().zip(&x) {
            *si -= d2 * xi;
        }
        let gamma_new = dot(&s, &s);
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
        let rn = norm(&r);
        let aug = (rn * rn + d2 * dot(&x, &x)).sqrt();
        if !aug.is_finite() {
            return Err(Error::Divergence {
                iteration: residuals.len() + 1,
                trace: residuals,
            });
        }
        residuals.push(rn);
        augmented.push(aug);
        let change = (prev_aug - aug).abs() / prev_aug.max(f64::MIN_POSITIVE);
        prev_aug = aug;
        if change < rel_tol {
            break;
        }
    }
    Ok(CglsRun {
        x,
        residuals,
        augmented,
        breakdown,
    })
}

/// CGLS on the stacked system `(A; lambda I) v = (b; 0)`. With `nonneg` the
/// final iterate is projected onto `v >= 0`.
pub fn cgls_tikhonov<O: LinearOperator>(
    a: &O,
    b: &[f64],
    config: &SolverConfig,
) -> Result<ReconResult> {
    config.validate()?;
    let x0 = check_dims(a, b, config.initial.as_ref())?;
    let run = cgls_core(a, b, x0, config.lambda, config.max_iters, config.rel_tol)?;
    let mut x = run.x;
    let mut residual_history = run.residuals;
    if config.nonneg {
        project_nonneg(&mut x);
        if let Some(last) = residual_history.last_mut() {
            *last = norm(&residual(a, &x, b)?);
        }
    }
    Ok(ReconResult {
        solution: x,
        iterations_used: residual_history.len(),
        residual_history,
        objective_history: run.augmented.iter().map(|v| v * v).collect(),
        breakdown: run.breakdown,
    })
}

/// Forward-difference gradient on an `n x n` image with reflexive boundary
/// (the difference across the last row/column is zero).
fn gradient(v: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; n * n];
    let mut gy = vec![0.0; n * n];
    for iy in 0..n {
        for ix in 0..n {
            let i = iy * n + ix;
            if ix + 1 < n {
                gx[i] = v[i + 1] - v[i];
            }
            if iy + 1 < n {
                gy[i] = v[i + n] - v[i];
            }
        }
    }
    (gx, gy)
}

/// Adjoint of [`gradient`].
fn gradient_transpose(gx: &[f64], gy: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for iy in 0..n {
        for ix in 0..n {
            let i = iy * n + ix;
            if ix + 1 < n {
                out[i + 1] += gx[i];
                out[i] -= gx[i];
            }
            if iy + 1 < n {
                out[i + n] += gy[i];
                out[i] -= gy[i];
            }
        }
    }
    out
}

/// Smoothed isotropic TV `sum sqrt(|grad v|^2 + tau^2)`.
pub fn tv_smoothed(v: &[f64], n: usize, tau: f64) -> f64 {
    let (gx, gy) = gradient(v, n);
    gx.iter()
        .zip(&gy)
        .map(|(x, y)| (x * x + y * y + tau * tau).sqrt())
        .sum()
}

/// `(A; c W^(1/2) D)` with `D` the image gradient and `W` per-pixel weights.
struct TvStacked<'a, O> {
    a: &'a O,
    n: usize,
    scaled_sqrt_w: Vec<f64>,
}

impl<O: LinearOperator> LinearOperator for TvStacked<'_, O> {
    fn n_rows(&self) -> usize {
        self.a.n_rows() + 2 * self.n * self.n
    }
    fn n_cols(&self) -> usize {
        self.a.n_cols()
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.a.apply(v)?;
        let (gx, gy) = gradient(v, self.n);
        out.extend(gx.iter().zip(&self.scaled_sqrt_w).map(|(g, w)| g * w));
        out.extend(gy.iter().zip(&self.scaled_sqrt_w).map(|(g, w)| g * w));
        Ok(out)
    }
    fn apply_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let m = self.a.n_rows();
        let nn = self.n * self.n;
        let mut out = self.a.apply_transpose(&b[..m])?;
        let gx: Vec<f64> = b[m..m + nn]
            .iter()
            .zip(&self.scaled_sqrt_w)
            .map(|(g, w)| g * w)
            .collect();
        let gy: Vec<f64> = b[m + nn..]
            .iter()
            .zip(&self.scaled_sqrt_w)
            .map(|(g, w)| g * w)
            .collect();
        for (o, d) in out.iter_mut().zip(gradient_transpose(&gx, &gy, self.n)) {
            *o += d;
        }
        Ok(out)
    }
}

/// Default TV smoothing: `1e-3` times the largest value of the backprojection
/// normalized by the column sums.
pub fn default_tau<O: LinearOperator>(a: &O, b: &[f64]) -> Result<f64> {
    let bp = a.apply_transpose(b)?;
    let cs = a.apply_transpose(&vec![1.0; a.n_rows()])?;
    let m = bp
        .iter()
        .zip(&cs)
        .filter(|(_, &c)| c > 0.0)
        .map(|(x, c)| (x / c).abs())
        .fold(0.0, f64::max);
    Ok(if m > 0.0 { 1e-3 * m } else { 1e-3 })
}

/// Heuristic TV with lagged diffusivity.
///
/// Each outer step freezes the weights `1/sqrt(|grad v_k|^2 + tau^2)`, which
/// turns the TV term into a quadratic majorizer, and runs warm-started CGLS
/// on the stacked system. With `nonneg`, the inner result is projected and
/// accepted only if the objective does not increase; otherwise a projected
/// gradient step with Armijo backtracking is tried, and failing that the
/// iterate is kept.
pub fn htv<O: LinearOperator>(
    a: &O,
    b: &[f64],
    config: &SolverConfig,
    grid: &GridSpec,
) -> Result<ReconResult> {
    config.validate()?;
    let n = grid.n;
    if a.n_cols() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: a.n_cols(),
        });
    }
    let mut v = check_dims(a, b, config.initial.as_ref())?;
    if config.nonneg {
        project_nonneg(&mut v);
    }
    let tau = match config.tv_tau {
        Some(t) => t,
        None => default_tau(a, b)?,
    };
    let lam2 = config.lambda * config.lambda;
    let objective = |v: &[f64]| -> Result<(f64, f64)> {
        let rn = norm(&residual(a, v, b)?);
        Ok((rn * rn + lam2 * tv_smoothed(v, n, tau), rn))
    };
    let (mut j, _) = objective(&v)?;
    let mut res_hist = Vec::new();
    let mut obj_hist = Vec::new();
    let mut b_stacked = b.to_vec();
    b_stacked.resize(a.n_rows() + 2 * n * n, 0.0);
    for _ in 0..config.max_iters {
        let (gx, gy) = gradient(&v, n);
        let c = config.lambda / 2f64.sqrt();
        let scaled_sqrt_w: Vec<f64> = gx
            .iter()
            .zip(&gy)
            .map(|(x, y)| c / (x * x + y * y + tau * tau).powf(0.25))
            .collect();
        let stacked = TvStacked {
            a,
            n,
            scaled_sqrt_w,
        };
        let inner = cgls_core(
            &stacked,
            &b_stacked,
            v.clone(),
            0.0,
            config.inner_iters,
            0.0,
        )?;
        let mut cand = inner.x;
        if config.nonneg {
            project_nonneg(&mut cand);
        }
        let (mut jc, mut rc) = objective(&cand)?;
        if !jc.is_finite() {
            let mut trace = res_hist.clone();
            trace.extend(inner.residuals);
            return Err(Error::Divergence {
                iteration: res_hist.len() + 1,
                trace,
            });
        }
        if jc > j {
            match projected_gradient_step(a, b, &v, j, lam2, n, tau, config.nonneg, &objective)? {
                Some((p, jp, rp)) => {
                    cand = p;
                    jc = jp;
                    rc = rp;
                }
                None => {
                    cand = v.clone();
                    jc = j;
                    rc = norm(&residual(a, &v, b)?);
                }
            }
        }
        let decrease = (j - jc) / j.abs().max(f64::MIN_POSITIVE);
        v = cand;
        j = jc;
        res_hist.push(rc);
        obj_hist.push(j);
        if decrease < config.rel_tol {
            break;
        }
    }
    Ok(ReconResult {
        solution: v,
        iterations_used: res_hist.len(),
        residual_history: res_hist,
        objective_history: obj_hist,
        breakdown: false,
    })
}

/// Gradient of the smoothed objective.
fn objective_gradient<O: LinearOperator>(
    a: &O,
    b: &[f64],
    v: &[f64],
    lam2: f64,
    n: usize,
    tau: f64,
) -> Result<Vec<f64>> {
    let r = residual(a, v, b)?;
    let mut g = a.apply_transpose(&r)?;
    for gi in g.iter_mut() {
        *gi *= -2.0;
    }
    let (gx, gy) = gradient(v, n);
    let (wx, wy): (Vec<f64>, Vec<f64>) = gx
        .iter()
        .zip(&gy)
        .map(|(x, y)| {
            let d = (x * x + y * y + tau * tau).sqrt();
            (x / d, y / d)
        })
        .unzip();
    for (gi, t) in g.iter_mut().zip(gradient_transpose(&wx, &wy, n)) {
        *gi += lam2 * t;
    }
    Ok(g)
}

#[allow(clippy::too_many_arguments)]
fn projected_gradient_step<O: LinearOperator>(
    a: &O,
    b: &[f64],
    v: &[f64],
    j: f64,
    lam2: f64,
    n: usize,
    tau: f64,
    nonneg: bool,
    objective: &dyn Fn(&[f64]) -> Result<(f64, f64)>,
) -> Result<Option<(Vec<f64>, f64, f64)>> {
    let g = objective_gradient(a, b, v, lam2, n, tau)?;
    let gg = dot(&g, &g);
    if gg == 0.0 {
        return Ok(None);
    }
    let ag = a.apply(&g)?;
    // Initial step from the data-term curvature along g.
    let mut step = 0.5 * gg / dot(&ag, &ag).max(f64::MIN_POSITIVE);
    for _ in 0..30 {
        let mut p: Vec<f64> = v.iter().zip(&g).map(|(x, gi)| x - step * gi).collect();
        if nonneg {
            project_nonneg(&mut p);
        }
        let moved: f64 = v.iter().zip(&p).map(|(x, y)| (x - y).powi(2)).sum();
        let (jp, rp) = objective(&p)?;
        if jp <= j - 1e-4 * moved / step && moved > 0.0 {
            return Ok(Some((p, jp, rp)));
        }
        step *= 0.5;
    }
    Ok(None)
}

/// Mean over a mask and the percentage error `100 |avg - truth| / truth`.
pub fn region_metrics(values: &[f64], mask: &[bool], true_value: f64) -> Result<(f64, f64)> {
    if values.len() != mask.len() {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            got: mask.len(),
        });
    }
    let (sum, count) = values
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let avg = sum / count as f64;
    Ok((avg, 100.0 * (avg - true_value).abs() / true_value))
}

/// `||x - y|| / ||y||`.
pub fn relative_error(x: &[f64], y: &[f64]) -> f64 {
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    (num / dot(y, y)).sqrt()
}

/// One point of a regularization sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub lambda: f64,
    pub residual: f64,
    pub solution_norm: f64,
    /// Relative error against a known truth, when given.
    pub error: Option<f64>,
}

/// Runs the configured method for each `lambda`, reporting residual and
/// solution norms (an L-curve) and, if `truth` is given, the relative error.
pub fn sweep_lambda<O: LinearOperator>(
    a: &O,
    b: &[f64],
    config: &SolverConfig,
    grid: &GridSpec,
    lambdas: &[f64],
    truth: Option<&[f64]>,
) -> Result<Vec<SweepPoint>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let cfg = SolverConfig {
                lambda,
                ..config.clone()
            };
            let res = reconstruct(a, b, &cfg, grid)?;
            Ok(SweepPoint {
                lambda,
                residual: norm(&residual(a, &res.solution, b)?),
                solution_norm: norm(&res.solution),
                error: truth.map(|t| relative_error(&res.solution, t)),
            })
        })
        .collect()
}
