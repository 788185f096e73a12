//! Uniform and integral norms of `2 pi`-periodic functions over `[0, 2 pi)`.
//!
//! Norms are unnormalised: `||g||_p = (int_0^{2 pi} |g|^p)^{1/p}`.
//!
//! For `p` not an even integer `|g|^p` has kinks at the zeros of `g`, which
//! caps a plain trapezoid rule at second order. The default rule
//! ([`QuadRule::SpectralPanels`]) samples `g`, `g'`, `g''` of a trigonometric
//! polynomial exactly by FFT, interpolates each cell with a quintic Hermite
//! polynomial, splits cells at sign changes and integrates the pieces with
//! Gauss-Legendre nodes.

use std::collections::HashMap;
use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use gauss_quad::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kernels::KernelEvaluator;
use crate::series::{grid_point, FourierSeries};
use crate::sum::{compensated, CompensatedSum};

const TAU: f64 = std::f64::consts::TAU;

/// An exponent `p` in `[1, inf]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Exponent(f64);

impl Exponent {
    pub const ONE: Exponent = Exponent(1.0);
    pub const TWO: Exponent = Exponent(2.0);
    pub const INF: Exponent = Exponent(f64::INFINITY);

    pub fn new(p: f64) -> Result<Self> {
        if p >= 1.0 {
            Ok(Exponent(p))
        } else {
            Err(Error::Domain(format!("exponent must lie in [1, inf], got {p}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// `p'` with `1/p + 1/p' = 1`.
    pub fn conjugate(self) -> Exponent {
        if self.0 == 1.0 {
            Exponent::INF
        } else if self.is_infinite() {
            Exponent::ONE
        } else {
            Exponent(self.0 / (self.0 - 1.0))
        }
    }

    /// `1/p`, zero for `p = inf`.
    pub fn reciprocal(self) -> f64 {
        if self.is_infinite() {
            0.0
        } else {
            1.0 / self.0
        }
    }

    /// `p` is an even integer, so `|g|^p = g^p` is smooth.
    fn even_integer(self) -> Option<u32> {
        let p = self.0;
        (p.is_finite() && p.fract() == 0.0 && p % 2.0 == 0.0 && p <= 64.0).then_some(p as u32)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Exponent::INF),
            other => {
                let p: f64 = other
                    .parse()
                    .map_err(|_| Error::Domain(format!("cannot parse exponent '{s}'")))?;
                Exponent::new(p)
            }
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Exponent::new(p),
            Raw::Str(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// A bounded `2 pi`-periodic function.
pub trait Periodic: Sync {
    fn eval(&self, t: f64) -> f64;

    /// Highest frequency present (or a resolution scale for non-polynomials).
    fn bandwidth(&self) -> usize;

    /// The function as an exact trigonometric polynomial, when it is one.
    fn as_series(&self) -> Option<&FourierSeries> {
        None
    }

    /// Values at `2 pi j / m`.
    fn sample_uniform(&self, m: usize) -> Vec<f64> {
        match self.as_series() {
            Some(s) => s.sample_uniform(m),
            None => (0..m).into_par_iter().map(|j| self.eval(grid_point(j, m))).collect(),
        }
    }
}

impl Periodic for FourierSeries {
    fn eval(&self, t: f64) -> f64 {
        FourierSeries::eval(self, t)
    }

    fn bandwidth(&self) -> usize {
        self.degree()
    }

    fn as_series(&self) -> Option<&FourierSeries> {
        Some(self)
    }
}

impl Periodic for KernelEvaluator {
    fn eval(&self, t: f64) -> f64 {
        KernelEvaluator::eval(self, t)
    }

    fn bandwidth(&self) -> usize {
        self.truncation_index() as usize
    }

    fn as_series(&self) -> Option<&FourierSeries> {
        Some(self.series())
    }
}

/// A closure with a declared resolution scale.
pub struct PeriodicFn<F> {
    pub f: F,
    pub bandwidth: usize,
}

impl<F: Fn(f64) -> f64 + Sync> Periodic for PeriodicFn<F> {
    fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    fn bandwidth(&self) -> usize {
        self.bandwidth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadRule {
    /// Composite trapezoid on a uniform grid.
    Trapezoid,
    /// Adaptive Gauss-Legendre panels on direct evaluations, split at zeros.
    GaussPanels,
    /// FFT-sampled quintic Hermite cells split at zeros, Gauss-Legendre pieces.
    SpectralPanels,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rule: QuadRule,
    /// Quadrature nodes per wavelength of the highest retained harmonic.
    pub points_per_wavelength: f64,
    /// Geometric shrink factor of the panels next to the kernel peak at `t = 0`.
    pub peak_shrink: f64,
    /// Target relative accuracy of `int |g|^p`.
    pub rel_tol: f64,
    pub max_doublings: u32,
}

impl QuadratureSpec {
    pub fn spectral() -> Self {
        QuadratureSpec {
            rule: QuadRule::SpectralPanels,
            points_per_wavelength: 8.0,
            peak_shrink: 0.5,
            rel_tol: 1e-10,
            max_doublings: 6,
        }
    }

    pub fn trapezoid() -> Self {
        QuadratureSpec {
            rule: QuadRule::Trapezoid,
            points_per_wavelength: 16.0,
            peak_shrink: 0.5,
            rel_tol: 1e-6,
            max_doublings: 6,
        }
    }

    pub fn gauss_panels() -> Self {
        QuadratureSpec {
            rule: QuadRule::GaussPanels,
            points_per_wavelength: 8.0,
            peak_shrink: 0.5,
            rel_tol: 1e-11,
            max_doublings: 12,
        }
    }

    pub fn with_points_per_wavelength(mut self, ppw: f64) -> Self {
        self.points_per_wavelength = ppw;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.points_per_wavelength >= 8.0) {
            return Err(Error::Domain(format!(
                "points_per_wavelength must be at least 8, got {}",
                self.points_per_wavelength
            )));
        }
        if !(self.peak_shrink > 0.0 && self.peak_shrink < 1.0) {
            return Err(Error::Domain(format!("peak_shrink must lie in (0, 1), got {}", self.peak_shrink)));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Domain(format!("rel_tol must be positive, got {}", self.rel_tol)));
        }
        Ok(())
    }

    /// Uniform cell count so that `cells * nodes_per_cell >= ppw * bandwidth`.
    fn cells(&self, bandwidth: usize, nodes_per_cell: usize) -> usize {
        let need = self.points_per_wavelength * bandwidth.max(1) as f64 / nodes_per_cell as f64;
        (need.ceil() as usize).next_power_of_two().max(16)
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec::spectral()
    }
}

/// A norm value with an error estimate and the number of function values used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub error: f64,
    pub nodes: usize,
}

impl NormEstimate {
    fn from_integral(integral: f64, error: f64, p: f64, nodes: usize) -> Self {
        let value = integral.powf(1.0 / p);
        let error = if integral > 0.0 {
            value * error / (p * integral)
        } else {
            error.powf(1.0 / p)
        };
        NormEstimate { value, error, nodes }
    }
}

fn gl_rule(n: usize) -> Vec<(f64, f64)> {
    // nodes and weights mapped to [0, 1]
    GaussLegendre::new(NonZeroUsize::new(n).expect("positive"))
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}

fn gl6() -> &'static [(f64, f64)] {
    static R: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    R.get_or_init(|| gl_rule(6))
}

fn gl8() -> &'static [(f64, f64)] {
    static R: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    R.get_or_init(|| gl_rule(8))
}

fn gl12() -> &'static [(f64, f64)] {
    static R: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    R.get_or_init(|| gl_rule(12))
}

/// `max |g|`: uniform grid of `grid_density * bandwidth` points, then
/// golden-section refinement around the largest local maxima.
///
/// The error field is the spread of the final golden-section bracket.
pub fn sup_norm<G: Periodic + ?Sized>(g: &G, grid_density: f64) -> NormEstimate {
    let m = ((grid_density.max(1.0) * g.bandwidth().max(1) as f64).ceil() as usize)
        .next_power_of_two()
        .max(64);
    let samples = g.sample_uniform(m);
    sup_from_samples(g, &samples).0
}

/// `(argmax |g|, max |g|)` by the same grid-and-refine search as [`sup_norm`].
pub fn argmax_abs<G: Periodic + ?Sized>(g: &G, grid_density: f64) -> (f64, f64) {
    let m = ((grid_density.max(1.0) * g.bandwidth().max(1) as f64).ceil() as usize)
        .next_power_of_two()
        .max(64);
    let (est, t) = sup_from_samples(g, &g.sample_uniform(m));
    (t, est.value)
}

fn sup_from_samples<G: Periodic + ?Sized>(g: &G, samples: &[f64]) -> (NormEstimate, f64) {
    const CANDIDATES: usize = 8;
    let m = samples.len();
    let h = TAU / m as f64;
    let mut peaks: Vec<(usize, f64)> = (0..m)
        .filter_map(|j| {
            let v = samples[j].abs();
            let l = samples[(j + m - 1) % m].abs();
            let r = samples[(j + 1) % m].abs();
            (v >= l && v >= r).then_some((j, v))
        })
        .collect();
    peaks.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    peaks.truncate(CANDIDATES);
    let grid_max = peaks.first().map_or(0.0, |p| p.1);
    let refined: Vec<(f64, f64, f64)> = peaks
        .par_iter()
        .map(|&(j, v)| {
            let (a, b) = (grid_point(j, m) - h, grid_point(j, m) + h);
            g.as_series()
                .and_then(|s| newton_max(s, grid_point(j, m), a, b, v))
                .unwrap_or_else(|| golden_max(|t| g.eval(t).abs(), a, b))
        })
        .collect();
    let mut arg = peaks.first().map_or(0.0, |p| grid_point(p.0, m));
    let (mut best, mut spread) = (grid_max, 0.0);
    for (v, s, t) in refined {
        if v > best {
            best = v;
            spread = s;
            arg = t;
        }
    }
    let est = NormEstimate {
        value: best,
        error: spread.max(4.0 * f64::EPSILON * best),
        nodes: m + CANDIDATES * 80,
    };
    (est, arg)
}

/// `(g'(t), g''(t))` with one `sin_cos` per harmonic.
fn slope_and_curvature(s: &FourierSeries, t: f64) -> (f64, f64) {
    let mut d1 = CompensatedSum::new();
    let mut d2 = CompensatedSum::new();
    for (k, (&ak, &bk)) in s.cos_coeffs().iter().zip(s.sin_coeffs()).enumerate() {
        if ak == 0.0 && bk == 0.0 {
            continue;
        }
        let kf = (k + 1) as f64;
        let (sn, cs) = (kf * t).sin_cos();
        d1.add(kf * (bk * cs - ak * sn));
        d2.add(-kf * kf * (ak * cs + bk * sn));
    }
    (d1.value(), d2.value())
}

/// Local maximum of `|g|` in `[a, b]` by Newton on `g'` from `t0`. `None` when
/// the iteration leaves the bracket, stalls, or ends anywhere but at a maximum
/// of `|g|` at least as large as `floor`.
fn newton_max(s: &FourierSeries, t0: f64, a: f64, b: f64, floor: f64) -> Option<(f64, f64, f64)> {
    let mut t = t0;
    let mut last_step = f64::INFINITY;
    let mut curvature = 0.0;
    for _ in 0..30 {
        let (d1, d2) = slope_and_curvature(s, t);
        if d2 == 0.0 || !d2.is_finite() {
            return None;
        }
        curvature = d2;
        let step = -d1 / d2;
        let next = t + step;
        if !(next >= a && next <= b) {
            return None;
        }
        t = next;
        last_step = step.abs();
        if last_step <= 4.0 * f64::EPSILON * (1.0 + t.abs()) {
            break;
        }
    }
    let value = s.eval(t);
    // a maximum of |g| has g'' of the opposite sign to g
    if value * curvature >= 0.0 || value.abs() < floor || last_step > 1e-9 * (b - a) {
        return None;
    }
    let spread = 0.5 * curvature.abs() * last_step * last_step;
    Some((value.abs(), spread, t))
}

/// Maximum of a unimodal `f` on `[a, b]`; returns the value, the spread of the
/// final bracket and the maximiser.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    let (best, arg) = [(fc, c), (fd, d), (fm, mid)]
        .into_iter()
        .fold((f64::NEG_INFINITY, mid), |acc, v| if v.0 > acc.0 { v } else { acc });
    let worst = fc.min(fd).min(fm);
    (best, best - worst, arg)
}

/// `||g||_p` over `[0, 2 pi)`.
pub fn lp_norm<G: Periodic + ?Sized>(g: &G, p: Exponent, quad: &QuadratureSpec) -> Result<NormEstimate> {
    quad.validate()?;
    match g.as_series() {
        Some(series) => NormCache::new(series).lp(p, quad),
        None => {
            if p.is_infinite() {
                return Ok(sup_norm(g, quad.points_per_wavelength));
            }
            match quad.rule {
                QuadRule::Trapezoid => trapezoid_lp(g, p.value(), quad, |m| g.sample_uniform(m)),
                QuadRule::GaussPanels | QuadRule::SpectralPanels => gauss_panels_lp(g, p.value(), quad),
            }
        }
    }
}

/// `||Psi*_{beta,n}||_p`.
pub fn kernel_norm(ke: &KernelEvaluator, p: Exponent, quad: &QuadratureSpec) -> Result<NormEstimate> {
    lp_norm(ke, p, quad)
}

fn trapezoid_lp<G: Periodic + ?Sized>(
    g: &G,
    p: f64,
    quad: &QuadratureSpec,
    mut sample: impl FnMut(usize) -> Vec<f64>,
) -> Result<NormEstimate> {
    let mut m = quad.cells(g.bandwidth(), 1);
    let mut last = (f64::NAN, f64::NAN);
    for _ in 0..=quad.max_doublings {
        let s = sample(m);
        let h = TAU / m as f64;
        let full = h * compensated(s.iter().map(|v| v.abs().powf(p)));
        let half = 2.0 * h * compensated(s.iter().step_by(2).map(|v| v.abs().powf(p)));
        let err = (full - half).abs();
        if err <= quad.rel_tol * full {
            return Ok(NormEstimate::from_integral(full, err, p, m));
        }
        last = (full, err);
        m *= 2;
    }
    Err(Error::NonConvergence(format!(
        "trapezoid estimate of int |g|^{p} = {} has error {:e} above rel_tol {:e} after {} doublings",
        last.0, last.1, quad.rel_tol, quad.max_doublings
    )))
}

/// Samples of a trigonometric polynomial reused across exponents and rules.
pub struct NormCache<'a> {
    series: &'a FourierSeries,
    values: HashMap<usize, Arc<Vec<f64>>>,
    derivatives: HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>,
}

impl<'a> NormCache<'a> {
    pub fn new(series: &'a FourierSeries) -> Self {
        NormCache {
            series,
            values: HashMap::new(),
            derivatives: HashMap::new(),
        }
    }

    fn values(&mut self, m: usize) -> Arc<Vec<f64>> {
        let series = self.series;
        self.values
            .entry(m)
            .or_insert_with(|| Arc::new(series.sample_uniform(m)))
            .clone()
    }

    fn derivatives(&mut self, m: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
        let series = self.series;
        self.derivatives
            .entry(m)
            .or_insert_with(|| {
                let d1 = series.derivative();
                let d2 = d1.derivative();
                Arc::new((d1.sample_uniform(m), d2.sample_uniform(m)))
            })
            .clone()
    }

    /// `||g||_p`; `p = 2` by Parseval, even integer `p` by an exact trapezoid
    /// sum, `p = inf` by [`sup_norm`], otherwise by `quad.rule`.
    pub fn lp(&mut self, p: Exponent, quad: &QuadratureSpec) -> Result<NormEstimate> {
        quad.validate()?;
        let degree = self.series.degree();
        if p.is_infinite() {
            let m = quad.cells(degree, 1);
            let samples = self.values(m);
            return Ok(sup_from_samples(self.series, &samples).0);
        }
        if let Some(q) = p.even_integer() {
            if q == 2 {
                let value = self.series.l2_norm_squared().sqrt();
                return Ok(NormEstimate {
                    value,
                    error: 4.0 * f64::EPSILON * value,
                    nodes: degree + 1,
                });
            }
            // g^q has degree q * degree, so this grid integrates it exactly
            let m = (q as usize * degree + 1).next_power_of_two().max(16);
            let s = self.values(m);
            let integral = TAU / m as f64 * compensated(s.iter().map(|v| v.powi(q as i32)));
            let err = 8.0 * f64::EPSILON * integral * (m as f64).log2();
            return Ok(NormEstimate::from_integral(integral, err, p.value(), m));
        }
        let p = p.value();
        match quad.rule {
            QuadRule::Trapezoid => {
                let series = self.series;
                trapezoid_lp(series, p, quad, |m| self.values(m).as_ref().clone())
            }
            QuadRule::GaussPanels => gauss_panels_lp(self.series, p, quad),
            QuadRule::SpectralPanels => self.spectral_lp(p, quad),
        }
    }

    fn spectral_lp(&mut self, p: f64, quad: &QuadratureSpec) -> Result<NormEstimate> {
        let mut m = quad.cells(self.series.degree(), gl6().len());
        let mut last = (f64::NAN, f64::NAN);
        for _ in 0..=quad.max_doublings {
            let g = self.values(m);
            let d = self.derivatives(m);
            let full = hermite_integral(&g, &d.0, &d.1, 1, p);
            let half = hermite_integral(&g, &d.0, &d.1, 2, p);
            // the interpolant is sixth order, so |full - half| is about 63 times
            // the error of `full`; dividing by 16 keeps a factor 4 of slack
            let err = (full - half).abs() / RICHARDSON_DIVISOR;
            if err <= quad.rel_tol * full || full == 0.0 {
                return Ok(NormEstimate::from_integral(full, err, p, m * gl6().len()));
            }
            last = (full, err);
            m *= 2;
        }
        Err(Error::NonConvergence(format!(
            "spectral-panel estimate of int |g|^{p} = {} has error {:e} above rel_tol {:e} after {} doublings",
            last.0, last.1, quad.rel_tol, quad.max_doublings
        )))
    }
}

/// Quintic Hermite interpolant on `s in [0, 1]` from values, first and second
/// derivatives (already scaled by the cell width) at both ends.
#[derive(Clone, Copy)]
struct Quintic {
    v0: f64,
    d0: f64,
    s0: f64,
    v1: f64,
    d1: f64,
    s1: f64,
}

impl Quintic {
    #[inline]
    fn eval(&self, s: f64) -> f64 {
        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        let s5 = s4 * s;
        let h0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
        let h1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
        let h2 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
        let h3 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
        let h4 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
        let h5 = 0.5 * (s3 - 2.0 * s4 + s5);
        self.v0 * h0 + self.d0 * h1 + self.s0 * h2 + self.v1 * h3 + self.d1 * h4 + self.s1 * h5
    }

    fn root(&self) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        let neg_at_lo = self.v0 < 0.0;
        while hi - lo > 1e-15 {
            let mid = 0.5 * (lo + hi);
            if (self.eval(mid) < 0.0) == neg_at_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn integrate_abs_pow(&self, a: f64, b: f64, rule: &[(f64, f64)], p: f64) -> f64 {
        let w = b - a;
        rule.iter()
            .map(|&(x, wt)| wt * self.eval(a + w * x).abs().powf(p))
            .sum::<f64>()
            * w
    }

    /// `int |q|^p` over `[a, b]` with `x = anchor + D u^3`, `D` reaching the
    /// end farther from `anchor`. When `anchor` is a zero of `q` the integrand
    /// behaves like `u^{3p+2}` there, smooth enough for Gauss-Legendre.
    fn graded_abs_pow(&self, anchor: f64, a: f64, b: f64, rule: &[(f64, f64)], p: f64) -> f64 {
        let (near, far) = if (a - anchor).abs() <= (b - anchor).abs() { (a, b) } else { (b, a) };
        let d = far - anchor;
        let u0 = ((near - anchor) / d).max(0.0).cbrt();
        let span = 1.0 - u0;
        rule.iter()
            .map(|&(v, wt)| {
                let u = u0 + span * v;
                let u2 = u * u;
                wt * 3.0 * u2 * self.eval(anchor + d * u2 * u).abs().powf(p)
            })
            .sum::<f64>()
            * span
            * d.abs()
    }

    /// Zero of `q` in the bracket `[a, b]`, `q(a)` and `q(b)` of opposite sign.
    fn bisect(&self, mut a: f64, mut b: f64) -> f64 {
        let neg_at_a = self.eval(a) < 0.0;
        while (b - a).abs() > 1e-15 {
            let mid = 0.5 * (a + b);
            if (self.eval(mid) < 0.0) == neg_at_a {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    /// A zero of the extended polynomial within one cell width beyond either
    /// end, the nearer one if both exist.
    fn nearby_outer_zero(&self) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        // (end, value, slope, direction)
        for (end, v, d, dir) in [(1.0, self.v1, self.d1, 1.0), (0.0, self.v0, self.d0, -1.0)] {
            if d == 0.0 {
                continue;
            }
            let step = -v / d * dir;
            if !(step > 0.0 && step <= 1.0) {
                continue;
            }
            let reach = end + dir * (2.0 * step).min(1.0);
            let zero = if (self.eval(reach) < 0.0) != (v < 0.0) {
                self.bisect(end, reach)
            } else {
                end + dir * step
            };
            let dist = (zero - end).abs();
            if best.is_none_or(|(bd, _)| dist < bd) {
                best = Some((dist, zero));
            }
        }
        best.map(|(_, z)| z)
    }
}

/// `int_0^1 |q|^p` for one cell. Sign changes are split at the root; for
/// non-integer `p` the pieces are graded towards every zero at or just beyond
/// the cell, where `|q|^p` is not smooth.
fn cell_abs_pow(q: &Quintic, p: f64, zero: f64) -> f64 {
    if p.fract() == 0.0 {
        // |q|^p is a polynomial between sign changes
        return if q.v0 * q.v1 < 0.0 {
            let r = q.root();
            q.integrate_abs_pow(0.0, r, gl8(), p) + q.integrate_abs_pow(r, 1.0, gl8(), p)
        } else {
            q.integrate_abs_pow(0.0, 1.0, gl6(), p)
        };
    }
    let z0 = q.v0.abs() <= zero;
    let z1 = q.v1.abs() <= zero;
    match (z0, z1) {
        (true, true) => q.graded_abs_pow(0.0, 0.0, 0.5, gl8(), p) + q.graded_abs_pow(1.0, 0.5, 1.0, gl8(), p),
        (true, false) => q.graded_abs_pow(0.0, 0.0, 1.0, gl8(), p),
        (false, true) => q.graded_abs_pow(1.0, 0.0, 1.0, gl8(), p),
        (false, false) if q.v0 * q.v1 < 0.0 => {
            let r = q.root();
            q.graded_abs_pow(r, 0.0, r, gl8(), p) + q.graded_abs_pow(r, r, 1.0, gl8(), p)
        }
        (false, false) => match q.nearby_outer_zero() {
            Some(z) => q.graded_abs_pow(z, 0.0, 1.0, gl8(), p),
            None => q.integrate_abs_pow(0.0, 1.0, gl6(), p),
        },
    }
}

const RICHARDSON_DIVISOR: f64 = 16.0;

/// `int_0^{2 pi} |g|^p` from samples at `2 pi j / m`, using every `stride`-th node.
fn hermite_integral(g: &[f64], d1: &[f64], d2: &[f64], stride: usize, p: f64) -> f64 {
    let m = g.len();
    // endpoint values this small are zeros of g up to rounding
    let zero = 64.0 * f64::EPSILON * g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cells = m / stride;
    let h = TAU * stride as f64 / m as f64;
    let h2 = h * h;
    let parts: Vec<f64> = (0..cells)
        .into_par_iter()
        .with_min_len(1024)
        .map(|c| {
            let j0 = c * stride;
            let j1 = (j0 + stride) % m;
            let q = Quintic {
                v0: g[j0],
                d0: h * d1[j0],
                s0: h2 * d2[j0],
                v1: g[j1],
                d1: h * d1[j1],
                s1: h2 * d2[j1],
            };
            let cell = cell_abs_pow(&q, p, zero);
            cell * h
        })
        .collect();
    compensated(parts)
}

/// Zero of `g` on `[a, b]` given a sign change, by the Illinois variant of
/// regula falsi.
fn illinois<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> f64 {
    let mut side = 0i8;
    for _ in 0..200 {
        if (b - a).abs() <= 4.0 * f64::EPSILON * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
        let fc = f(c);
        if fc == 0.0 {
            return c;
        }
        if (fc < 0.0) == (fb < 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (a + b)
}

fn gl_piece<G: Periodic + ?Sized>(g: &G, a: f64, b: f64, rule: &[(f64, f64)], p: f64) -> f64 {
    let w = b - a;
    compensated(rule.iter().map(|&(x, wt)| wt * g.eval(a + w * x).abs().powf(p))) * w
}

/// Adaptive 12-vs-6 point Gauss-Legendre on `[a, b]`; returns (integral, error, nodes).
fn adaptive_piece<G: Periodic + ?Sized>(g: &G, a: f64, b: f64, p: f64, tol: f64, depth: u32) -> (f64, f64, usize) {
    let fine = gl_piece(g, a, b, gl12(), p);
    let coarse = gl_piece(g, a, b, gl6(), p);
    let err = (fine - coarse).abs();
    if err <= tol || depth == 0 {
        return (fine, err, 18);
    }
    let mid = 0.5 * (a + b);
    let (l, le, ln) = adaptive_piece(g, a, mid, p, 0.5 * tol, depth - 1);
    let (r, re, rn) = adaptive_piece(g, mid, b, p, 0.5 * tol, depth - 1);
    (l + r, le + re, ln + rn + 18)
}

fn gauss_panels_lp<G: Periodic + ?Sized>(g: &G, p: f64, quad: &QuadratureSpec) -> Result<NormEstimate> {
    let panels = quad.cells(g.bandwidth(), gl12().len());
    let w = TAU / panels as f64;
    // panel edges, with the panels touching t = 0 split geometrically
    let mut edges = vec![0.0];
    let splits = 6;
    for i in (0..splits).rev() {
        edges.push(w * quad.peak_shrink.powi(i + 1));
    }
    for i in 1..panels {
        edges.push(w * i as f64);
    }
    for i in 0..splits {
        edges.push(TAU - w * quad.peak_shrink.powi(i + 1));
    }
    edges.push(TAU);
    let values: Vec<f64> = edges.par_iter().map(|&t| g.eval(t)).collect();

    // rough scale for the absolute tolerance
    let scale: f64 = edges
        .windows(2)
        .zip(values.windows(2))
        .map(|(e, v)| 0.5 * (e[1] - e[0]) * (v[0].abs().powf(p) + v[1].abs().powf(p)))
        .sum();
    let tol_density = quad.rel_tol * scale.max(f64::MIN_POSITIVE) / TAU;

    let parts: Vec<(f64, f64, usize)> = (0..edges.len() - 1)
        .into_par_iter()
        .map(|i| {
            let (a, b) = (edges[i], edges[i + 1]);
            let (fa, fb) = (values[i], values[i + 1]);
            let pieces = if fa * fb < 0.0 {
                let r = illinois(|t| g.eval(t), a, b, fa, fb);
                vec![(a, r), (r, b)]
            } else {
                vec![(a, b)]
            };
            pieces
                .into_iter()
                .map(|(x, y)| adaptive_piece(g, x, y, p, tol_density * (y - x), quad.max_doublings))
                .fold((0.0, 0.0, 0), |acc, v| (acc.0 + v.0, acc.1 + v.1, acc.2 + v.2))
        })
        .collect();
    let mut total = CompensatedSum::new();
    let (mut err, mut nodes) = (0.0, edges.len());
    for (v, e, k) in parts {
        total.add(v);
        err += e;
        nodes += k;
    }
    let total = total.value();
    if err > quad.rel_tol * total.max(f64::MIN_POSITIVE) * 10.0 {
        return Err(Error::NonConvergence(format!(
            "Gauss panels: error estimate {err:e} exceeds tolerance for integral {total}"
        )));
    }
    Ok(NormEstimate::from_integral(total, err, p, nodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psi::PsiFunction;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn exponent_parsing_and_conjugates() {
        assert_eq!("inf".parse::<Exponent>().unwrap(), Exponent::INF);
        assert_eq!("4".parse::<Exponent>().unwrap().conjugate().value(), 4.0 / 3.0);
        assert_eq!(Exponent::ONE.conjugate(), Exponent::INF);
        assert_eq!(Exponent::INF.conjugate(), Exponent::ONE);
        assert_eq!(Exponent::TWO.conjugate(), Exponent::TWO);
        assert!("0.5".parse::<Exponent>().is_err());
        assert_eq!(serde_json::to_string(&Exponent::INF).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&Exponent::TWO).unwrap(), "2.0");
        let e: Exponent = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(e, Exponent::INF);
        let e: Exponent = serde_json::from_str("1.5").unwrap();
        assert_eq!(e.value(), 1.5);
    }

    #[test]
    fn newton_peak_matches_golden() {
        use crate::kernels::KernelEvaluator;
        use crate::PsiFunction;
        for (beta, n) in [(0.0, 16), (1.0, 23)] {
            let ke = KernelEvaluator::new(&PsiFunction::exp_power(1.0, 0.5).unwrap(), beta, n).unwrap();
            let s = ke.series();
            let m = 8 * (ke.truncation_index() as usize).next_power_of_two();
            let samples = s.sample_uniform(m);
            let (j, v) = samples
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |acc, (j, x)| if x.abs() > acc.1 { (j, x.abs()) } else { acc });
            let h = TAU / m as f64;
            let t0 = grid_point(j, m);
            let newton = newton_max(s, t0, t0 - h, t0 + h, v).expect("newton converges");
            let golden = golden_max(|t| s.eval(t).abs(), t0 - h, t0 + h);
            assert_relative_eq!(newton.0, golden.0, max_relative = 1e-13);
        }
    }

    #[test]
    fn elementary_norms() {
        let cos = FourierSeries::harmonic(1, 1.0, 0.0);
        let q = QuadratureSpec::default();
        assert_relative_eq!(lp_norm(&cos, Exponent::TWO, &q).unwrap().value, PI.sqrt(), max_relative = 1e-14);
        let one = FourierSeries::constant(1.0);
        assert_relative_eq!(lp_norm(&one, Exponent::ONE, &q).unwrap().value, TAU, max_relative = 1e-13);
        let cos3 = FourierSeries::harmonic(3, 1.0, 0.0);
        assert!((sup_norm(&cos3, 8.0).value - 1.0).abs() <= 1e-10);
        // int |cos x| = 4
        let est = lp_norm(&cos, Exponent::ONE, &q).unwrap();
        assert!((est.value - 4.0).abs() <= est.error.max(1e-10 * 4.0), "{est:?}");
        for rule in [QuadratureSpec::gauss_panels()] {
            assert_relative_eq!(lp_norm(&cos, Exponent::ONE, &rule).unwrap().value, 4.0, max_relative = 1e-11);
        }
        // int cos^4 = 3 pi / 4
        let v = lp_norm(&cos, Exponent::new(4.0).unwrap(), &q).unwrap().value;
        assert_relative_eq!(v, (0.75 * PI).powf(0.25), max_relative = 1e-14);
    }

    #[test]
    fn dirichlet_peak() {
        let d7 = FourierSeries::new(1.0, vec![1.0; 7], vec![0.0; 7]).unwrap();
        assert_relative_eq!(sup_norm(&d7, 8.0).value, 7.5, max_relative = 1e-14);
    }

    #[test]
    fn closure_norms() {
        let f = PeriodicFn { f: |t: f64| t.sin(), bandwidth: 1 };
        let q = QuadratureSpec::gauss_panels();
        assert_relative_eq!(lp_norm(&f, Exponent::ONE, &q).unwrap().value, 4.0, max_relative = 1e-11);
        assert!((lp_norm(&f, Exponent::INF, &q).unwrap().value - 1.0).abs() < 1e-12);
    }

    fn kernel16() -> KernelEvaluator {
        KernelEvaluator::new(&PsiFunction::exp_power(1.0, 0.5).unwrap(), 0.0, 16).unwrap()
    }

    #[test]
    fn kernel_sup_matches_dense_scan() {
        let ke = kernel16();
        let s = sup_norm(&ke, 8.0).value;
        let dense = ke.sample_uniform(1 << 20).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((s - dense).abs() <= 1e-8 * dense, "{s} vs {dense}");
        assert!(s >= dense);
    }

    #[test]
    fn kernel_l1_is_stable_and_rule_independent() {
        let ke = kernel16();
        let q = QuadratureSpec::default();
        let base = kernel_norm(&ke, Exponent::ONE, &q).unwrap();
        let fine = kernel_norm(&ke, Exponent::ONE, &q.with_points_per_wavelength(32.0)).unwrap();
        assert!((base.value - fine.value).abs() <= 1e-8 * fine.value);
        let gp = kernel_norm(&ke, Exponent::ONE, &QuadratureSpec::gauss_panels()).unwrap();
        assert!((base.value - gp.value).abs() <= 1e-7 * gp.value, "{} vs {}", base.value, gp.value);
        let inf = kernel_norm(&ke, Exponent::INF, &q).unwrap();
        assert!(base.value <= TAU * inf.value);
    }

    #[test]
    fn kernel_fractional_norm_rules_agree() {
        let ke = kernel16();
        let p = Exponent::new(4.0 / 3.0).unwrap();
        let a = kernel_norm(&ke, p, &QuadratureSpec::default()).unwrap();
        let b = kernel_norm(&ke, p, &QuadratureSpec::gauss_panels()).unwrap();
        assert!((a.value - b.value).abs() <= 1e-8 * b.value, "{} vs {}", a.value, b.value);
    }

    #[test]
    fn geometric_kernel_sup() {
        let psi = PsiFunction::exp_power(std::f64::consts::LN_2, 1.0).unwrap();
        let ke = KernelEvaluator::new(&psi, 0.0, 10).unwrap();
        let s = kernel_norm(&ke, Exponent::INF, &QuadratureSpec::default()).unwrap();
        assert!((s.value - 2f64.powi(-9)).abs() <= 2.0 * ke.tail_eps());
    }

    #[test]
    fn plain_trapezoid_reports_nonconvergence_at_tight_tolerance() {
        let ke = kernel16();
        let mut q = QuadratureSpec::trapezoid();
        q.rel_tol = 1e-14;
        q.max_doublings = 1;
        assert!(matches!(kernel_norm(&ke, Exponent::ONE, &q), Err(Error::NonConvergence(_))));
    }
}

