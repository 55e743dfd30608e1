//! Closed forms for the constant superpotential `W = i a` on `[0, d]`: the
//! Robin modes, the metric eigendata, the overlaps `s_mn = <Xi_m|xi_n>`, the
//! two cosine-series identities and the basis functions `Phi_n`.

pub mod series;
pub mod special;

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{fmt_f64, Grid, GridFunction};
use series::cesaro_tail;
use special::{beta_fn, gamma_fn, integrate};

/// Smallest accepted distance of `a d / pi` from a positive integer.
pub const DIAG_MARGIN: f64 = 1e-3;
/// Error estimate above which a quadrature piece counts as failed.
const QUAD_FAIL_TOL: f64 = 1e-9;
/// Below this argument `sin(n t) / sin(t / 2)` is evaluated by its series.
const SMALL_T: f64 = 1e-3;
/// Smallest truncation accepted by [`phi_series`].
pub const MIN_SERIES_TERMS: usize = 100;
/// Terms used for the left-hand sides of the cosine-series identities.
pub const IDENTITY_TERMS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobinParams {
    a: f64,
    d: f64,
    diag_margin: f64,
}

impl RobinParams {
    pub fn new(a: f64, d: f64) -> Result<Self> {
        if !(a.is_finite() && d.is_finite()) {
            return Err(Error::NonFinite("Robin parameters"));
        }
        if a == 0.0 {
            return Err(Error::InvalidParameter("a must be nonzero".into()));
        }
        if d <= 0.0 {
            return Err(Error::InvalidParameter(format!("interval length must be positive, got {d}")));
        }
        let ratio = a.abs() * d / PI;
        let nearest = ratio.round().max(1.0);
        let diag_margin = (ratio - nearest).abs();
        if diag_margin <= DIAG_MARGIN {
            return Err(Error::DiagMarginViolation { ratio, margin: DIAG_MARGIN });
        }
        Ok(RobinParams { a, d, diag_margin })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// `min_n |a d / pi - n|` over `n >= 1`.
    pub fn diag_margin(&self) -> f64 {
        self.diag_margin
    }

    pub fn k(&self, n: usize) -> f64 {
        PI * n as f64 / self.d
    }

    /// Level `n` of the partner: `a²` for `n = 0`, `k_n²` otherwise.
    pub fn energy(&self, n: usize) -> f64 {
        if n == 0 {
            self.a * self.a
        } else {
            self.k(n).powi(2)
        }
    }
}

/// `phi_0 = exp(-i a x)`, `phi_n = cos(k_n x) - (i a / k_n) sin(k_n x)`; not unit norm.
/// The adjoint modes are `xi_n = conj(phi_n)`.
pub fn robin_eigenfunction(p: &RobinParams, n: usize) -> impl Fn(f64) -> Complex64 + Copy + Send + Sync {
    let (a, k) = (p.a, p.k(n));
    move |x| {
        if n == 0 {
            Complex64::new(0.0, -a * x).exp()
        } else {
            Complex64::new((k * x).cos(), -a / k * (k * x).sin())
        }
    }
}

/// `(lambda_n², Xi_n)` with `Xi_0 = exp(i a x) / sqrt(d)` and
/// `Xi_n = sqrt(2 / d) exp(i a x) cos(k_n x)`.
pub fn metric_eigendata(p: &RobinParams, n: usize) -> (f64, impl Fn(f64) -> Complex64 + Copy + Send + Sync) {
    let (a, k) = (p.a, p.k(n));
    let c = if n == 0 { (1.0 / p.d).sqrt() } else { (2.0 / p.d).sqrt() };
    (k * k, move |x: f64| Complex64::new(0.0, a * x).exp() * (c * (k * x).cos()))
}

/// `s_mn = <Xi_m|xi_n>` for unit `Xi_m` and the un-normalized `xi_n`, `n >= 1`.
pub fn overlap_s(p: &RobinParams, m: usize, n: usize) -> Result<Complex64> {
    if n == 0 {
        return Err(Error::InvalidParameter("overlap index n must be at least 1".into()));
    }
    let (a, d) = (p.a, p.d);
    let (ad2, m2, n2, pi2) = ((a * d).powi(2), (m * m) as f64, (n * n) as f64, PI * PI);
    let den = ad2 * ad2 - 2.0 * ad2 * (m2 + n2) * pi2 + (m2 - n2).powi(2) * pi2 * pi2;
    let scale = (ad2 + (m2 + n2) * pi2).powi(2);
    if den.abs() <= 1e-10 * scale {
        return Err(Error::DenominatorCollision { m, n });
    }
    let sign = if (m + n).is_multiple_of(2) { 1.0 } else { -1.0 };
    let phase = Complex64::new(0.0, -a * d).exp();
    let num = Complex64::new(0.0, 2.0 * a * d * (2.0 * d).sqrt()) * phase * (sign - phase.conj()) * (ad2 - n2 * pi2);
    let s = num / den;
    Ok(if m == 0 { s / 2f64.sqrt() } else { s })
}

/// `<Xi_m|xi_n>` by adaptive quadrature of the closed-form modes.
pub fn overlap_quadrature(p: &RobinParams, m: usize, n: usize) -> Result<Complex64> {
    let xi_m = metric_eigendata(p, m).1;
    let phi_n = robin_eigenfunction(p, n);
    let integrand = move |x: f64| xi_m(x).conj() * phi_n(x).conj();
    let re = integrate(|x| integrand(x).re, 0.0, p.d, QUAD_FAIL_TOL)?;
    let im = integrate(|x| integrand(x).im, 0.0, p.d, QUAD_FAIL_TOL)?;
    Ok(Complex64::new(re, im))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub lhs_plain: f64,
    pub lhs_accelerated: f64,
    pub rhs: f64,
}

impl IdentityCheck {
    pub fn discrepancy(&self) -> f64 {
        (self.lhs_accelerated - self.rhs).abs()
    }
}

fn check_identity_point(x: f64) -> Result<()> {
    if !(x > 0.0 && x < PI) {
        return Err(Error::InvalidParameter(format!("x = {x} must lie strictly inside (0, pi)")));
    }
    Ok(())
}

fn identity_lhs(rho: f64, x: f64, alternating: bool) -> (f64, f64) {
    let v = cesaro_tail(IDENTITY_TERMS, IDENTITY_TERMS / 10, |n| {
        let t = (n as f64 * x).cos() / (n as f64 + rho);
        Complex64::new(if alternating && n % 2 == 1 { -t } else { t }, 0.0)
    });
    (v.plain.re, v.accelerated.re)
}

/// `sum cos(n x) / (n + rho) = beta(rho) cos((pi - x) rho) + 1/2 int_x^pi cos((rho - 1/2) t - x rho) csc(t/2) dt`
pub fn cosine_identity(rho: f64, x: f64) -> Result<IdentityCheck> {
    check_identity_point(x)?;
    let beta = beta_fn(rho)?;
    let i1 = integrate(|t| ((rho - 0.5) * t - x * rho).cos() / (0.5 * t).sin(), x, PI, QUAD_FAIL_TOL)?;
    let (lhs_plain, lhs_accelerated) = identity_lhs(rho, x, false);
    Ok(IdentityCheck { lhs_plain, lhs_accelerated, rhs: beta * ((PI - x) * rho).cos() + 0.5 * i1 })
}

/// `sum (-1)^n cos(n x) / (n + rho) = beta(rho) cos(x rho) - 1/2 int_0^x sin((rho - 1/2) t - x rho) sec(t/2) dt`
pub fn alternating_identity(rho: f64, x: f64) -> Result<IdentityCheck> {
    check_identity_point(x)?;
    let beta = beta_fn(rho)?;
    let i2 = integrate(|t| ((rho - 0.5) * t - x * rho).sin() / (0.5 * t).cos(), 0.0, x, QUAD_FAIL_TOL)?;
    let (lhs_plain, lhs_accelerated) = identity_lhs(rho, x, true);
    Ok(IdentityCheck { lhs_plain, lhs_accelerated, rhs: beta * (x * rho).cos() - 0.5 * i2 })
}

/// [`cosine_identity`] and [`alternating_identity`] at one point.
pub fn series_identity_check(rho: f64, x: f64) -> Result<[IdentityCheck; 2]> {
    Ok([cosine_identity(rho, x)?, alternating_identity(rho, x)?])
}

/// `sin(n u) / sin(u / 2)`, smooth through `u = 0`.
fn sin_ratio(n: f64, u: f64) -> f64 {
    if u.abs() < SMALL_T {
        2.0 * n * (1.0 - (n * n / 6.0 - 1.0 / 24.0) * u * u)
    } else {
        (n * u).sin() / (0.5 * u).sin()
    }
}

/// The long closed-form expression for `Phi_n` built from `gamma(delta)`,
/// `gamma(zeta)` and two kernel integrals. `n = 0` gives `exp(i a x)`.
///
/// Relative to [`phi_series`] this expression carries a global factor `i`.
pub fn phi_closed_form(p: &RobinParams, n: usize, x: f64) -> Result<Complex64> {
    let (a, d) = (p.a, p.d);
    if n == 0 {
        return Ok(Complex64::new(0.0, a * x).exp());
    }
    let nf = n as f64;
    let m = a * d / PI;
    let (delta, zeta) = (m - nf, m + nf);
    let s = PI * x / d;
    let (g_delta, g_zeta) = (gamma_fn(delta)?, gamma_fn(zeta)?);
    let parity = if n.is_multiple_of(2) { 1.0 } else { -1.0 };

    // cos(zeta u) - cos(delta u) = -2 sin(m u) sin(n u) with u = s - t.
    let cot_part = if s == 0.0 {
        integrate(|t| -2.0 * (m * t).sin() * sin_ratio(nf, t) * (0.5 * t).cos(), 0.0, PI, QUAD_FAIL_TOL)?
    } else {
        integrate(
            |t| {
                let u = s - t;
                -2.0 * (m * u).sin() * (nf * u).sin() / (0.5 * t).tan()
            },
            s,
            PI,
            QUAD_FAIL_TOL,
        )?
    };
    let tan_part = if (PI - s).abs() < f64::EPSILON * PI {
        integrate(
            |t| {
                let u = PI - t;
                2.0 * (m * u).sin() * sin_ratio(nf, u) * (0.5 * t).sin()
            },
            0.0,
            PI,
            QUAD_FAIL_TOL,
        )?
    } else {
        integrate(
            |t| {
                let u = s - t;
                2.0 * (m * u).sin() * (nf * u).sin() * (0.5 * t).tan()
            },
            0.0,
            s,
            QUAD_FAIL_TOL,
        )?
    };

    let e_iad = Complex64::new(0.0, a * d).exp();
    let pre = Complex64::new(0.0, (x - d) * a).exp() * ((a * d).powi(2) - (nf * PI).powi(2)) / (2.0 * nf * d * PI);
    let braces = e_iad / PI * (g_zeta * (PI * zeta - s * zeta).cos() - g_delta * (PI * delta - s * delta).cos())
        + e_iad / PI * cot_part
        + parity / PI * (g_delta * (s * delta).cos() - g_zeta * (s * zeta).cos())
        + parity / PI * tan_part;
    Ok(pre * braces)
}

/// `sum_{k=1}^{K} lambda_k s_kn Xi_k(x)` with the last `K / 10` partial sums averaged.
pub fn phi_series(p: &RobinParams, n: usize, x: f64, k_max: usize) -> Result<Complex64> {
    if k_max < MIN_SERIES_TERMS {
        return Err(Error::InvalidParameter(format!("series needs at least {MIN_SERIES_TERMS} terms, got {k_max}")));
    }
    if n == 0 {
        return Ok(metric_eigendata(p, 0).1(x));
    }
    let coeffs = (1..=k_max).map(|k| overlap_s(p, k, n).map(|s| p.k(k) * s)).collect::<Result<Vec<_>>>()?;
    let c = (2.0 / p.d).sqrt();
    let carrier = Complex64::new(0.0, p.a * x).exp() * c;
    let v = cesaro_tail(k_max, k_max / 10, |i| coeffs[i] * (p.k(i + 1) * x).cos());
    Ok(carrier * v.accelerated)
}

/// `phi_series` on every grid point.
pub fn sample_phi_series(p: &RobinParams, grid: &Arc<Grid>, n: usize, k_max: usize) -> Result<GridFunction> {
    let values =
        (0..grid.n_points()).into_par_iter().map(|i| phi_series(p, n, grid.x(i), k_max)).collect::<Result<_>>()?;
    GridFunction::new(grid, values)
}

/// `phi_closed_form` on every grid point.
pub fn sample_phi_closed(p: &RobinParams, grid: &Arc<Grid>, n: usize) -> Result<GridFunction> {
    let values =
        (0..grid.n_points()).into_par_iter().map(|i| phi_closed_form(p, n, grid.x(i))).collect::<Result<_>>()?;
    GridFunction::new(grid, values)
}

/// 17 equally spaced interior points of `[0, d]`.
pub fn interior_points(d: f64) -> Vec<f64> {
    (1..=17).map(|i| d * i as f64 / 18.0).collect()
}

/// Pointwise comparison of the closed form and the series.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiComparison {
    pub n: usize,
    pub x: Vec<f64>,
    pub closed: Vec<Complex64>,
    pub series: Vec<Complex64>,
    /// Unimodular `c` minimizing `sum |closed - c series|²`.
    pub phase: Complex64,
}

impl PhiComparison {
    pub fn new(p: &RobinParams, n: usize, x: Vec<f64>, k_max: usize) -> Result<Self> {
        let closed = x.par_iter().map(|&x| phi_closed_form(p, n, x)).collect::<Result<Vec<_>>>()?;
        let series = x.par_iter().map(|&x| phi_series(p, n, x, k_max)).collect::<Result<Vec<_>>>()?;
        let dot: Complex64 = series.iter().zip(&closed).map(|(s, c)| s.conj() * c).sum();
        let phase = if dot.norm() > 0.0 { dot / dot.norm() } else { Complex64::ONE };
        Ok(PhiComparison { n, x, closed, series, phase })
    }

    /// `|closed - phase * series|` at each point.
    pub fn abs_diff(&self) -> Vec<f64> {
        self.closed.iter().zip(&self.series).map(|(c, s)| (c - self.phase * s).norm()).collect()
    }

    /// Largest `abs_diff` relative to the largest `|series|`.
    pub fn max_rel_diff(&self) -> f64 {
        let scale = self.series.iter().map(|s| s.norm()).fold(0.0, f64::max);
        self.abs_diff().into_iter().fold(0.0, f64::max) / scale
    }

    /// `x,re_closed,im_closed,re_series,im_series,abs_diff`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "re_closed", "im_closed", "re_series", "im_series", "abs_diff"])?;
        for (((x, c), s), e) in self.x.iter().zip(&self.closed).zip(&self.series).zip(self.abs_diff()) {
            w.write_record([fmt_f64(*x), fmt_f64(c.re), fmt_f64(c.im), fmt_f64(s.re), fmt_f64(s.im), fmt_f64(e)])?;
        }
        w.flush()?;
        Ok(())
    }
}
