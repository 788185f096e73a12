//! The tapered Fourier multiplier `V_{n,psi}` and the class functions it acts on.
//!
//! `V_{n,psi}(f) = a0/2 + sum_{k=1}^{n-1} lambda(k) (a_k cos kx + b_k sin kx)` with
//! `lambda(k) = 1` for `k <= 2n - [eta(n)] - 1` and
//! `lambda(k) = 1 - ([eta(n)] - 2n + k)/([eta(n)] - n) psi(n)/psi(k)` above.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{phase, KernelEvaluator};
use crate::norms::{argmax_abs, lp_norm, Exponent, QuadratureSpec};
use crate::psi::PsiFunction;
use crate::series::FourierSeries;
use crate::sum::compensated;

const TAU: f64 = std::f64::consts::TAU;

/// Means above this magnitude are flagged on extremal functions.
pub const MEAN_FLAG: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaperCoefficients {
    pub n: u64,
    /// `lambda(k)` for `k = 0..n`.
    pub lambda: Vec<f64>,
    /// `[eta(n)]`.
    pub eta_floor: i64,
    /// `[eta(n)] - n`.
    pub gap: i64,
}

impl TaperCoefficients {
    pub fn new(psi: &PsiFunction, n: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("n must be at least 2, got {n}")));
        }
        let nf = n as f64;
        let eta_floor = psi.eta_floor(nf)?;
        let gap = eta_floor - n as i64;
        if gap <= 0 {
            return Err(Error::DegenerateGap { n });
        }
        let ln_psi_n = psi.ln_eval(nf)?;
        let last_flat = 2 * n as i64 - eta_floor - 1;
        let lambda = (0..n as i64)
            .map(|k| {
                // the constant term is never tapered
                if k <= last_flat || k == 0 {
                    1.0
                } else {
                    let ramp = (eta_floor - 2 * n as i64 + k) as f64 / gap as f64;
                    1.0 - ramp * (ln_psi_n - psi.ln_at(k as f64)).exp()
                }
            })
            .collect();
        Ok(TaperCoefficients {
            n,
            lambda,
            eta_floor,
            gap,
        })
    }

    /// Last index of the flat band, `2n - [eta(n)] - 1` (may be negative).
    pub fn flat_band_end(&self) -> i64 {
        2 * self.n as i64 - self.eta_floor - 1
    }

    pub fn lambda(&self, k: usize) -> f64 {
        self.lambda.get(k).copied().unwrap_or(0.0)
    }

    /// `lambda` is nonincreasing over the tapered range.
    pub fn is_monotone(&self) -> bool {
        self.lambda.windows(2).all(|w| w[1] <= w[0])
    }
}

/// `V_{n,psi}(f)`, a polynomial of degree `n - 1`.
pub fn apply_vn(f: &FourierSeries, tc: &TaperCoefficients) -> FourierSeries {
    let deg = tc.n as usize - 1;
    let mut a = Vec::with_capacity(deg);
    let mut b = Vec::with_capacity(deg);
    for k in 1..=deg {
        let (ak, bk) = f.coeff(k);
        a.push(tc.lambda(k) * ak);
        b.push(tc.lambda(k) * bk);
    }
    FourierSeries::new(f.a0, a, b).expect("equal lengths")
}

/// `S_m(f)`.
pub fn partial_sum(f: &FourierSeries, m: usize) -> FourierSeries {
    f.partial_sum(m)
}

/// `f = a0/2 + (1/pi) int Psi_beta(x - t) phi(t) dt` for a zero-mean
/// trigonometric polynomial `phi`: the `k`-th harmonic of `f` is
/// `psi(k) (alpha_k cos(kx - theta) + beta_k sin(kx - theta))`.
pub fn synthesize_class_function(
    psi: &PsiFunction,
    beta: f64,
    phi: &FourierSeries,
    a0: f64,
) -> Result<FourierSeries> {
    let scale = 1.0 + phi.max_abs_coeff();
    if phi.mean().abs() > 1e-14 * scale {
        return Err(Error::Domain(format!("phi must have zero mean, got mean {}", phi.mean())));
    }
    let (c, s) = phase(beta);
    let mut a = Vec::with_capacity(phi.degree());
    let mut b = Vec::with_capacity(phi.degree());
    for k in 1..=phi.degree() {
        let (al, be) = phi.coeff(k);
        let w = psi.eval(k as f64)?;
        a.push(w * (al * c - be * s));
        b.push(w * (al * s + be * c));
    }
    FourierSeries::new(a0, a, b)
}

/// `f - V_{n,psi}(f)` by coefficients.
pub fn residual_series(f: &FourierSeries, tc: &TaperCoefficients) -> FourierSeries {
    let mut a = Vec::with_capacity(f.degree());
    let mut b = Vec::with_capacity(f.degree());
    for k in 1..=f.degree() {
        let (ak, bk) = f.coeff(k);
        let keep = if k < tc.n as usize { 1.0 - tc.lambda(k) } else { 1.0 };
        a.push(keep * ak);
        b.push(keep * bk);
    }
    FourierSeries::new(0.0, a, b).expect("equal lengths")
}

/// `(1/pi) int_0^{2 pi} phi(x - t) Psi*(t) dt` at each `x`.
///
/// The integrand is a trigonometric polynomial of degree `deg phi + K`, so the
/// trapezoid rule on more nodes than that is exact.
pub fn kernel_convolution(ke: &KernelEvaluator, phi: &FourierSeries, xs: &[f64]) -> Vec<f64> {
    let m = (ke.truncation_index() as usize + phi.degree() + 1).next_power_of_two();
    let kernel = ke.sample_uniform(m);
    let h = TAU / m as f64;
    xs.iter()
        .map(|&x| {
            // phi(x - t) as a series in t
            let mut shifted = FourierSeries::zero(phi.degree());
            shifted.a0 = phi.a0;
            for k in 1..=phi.degree() {
                let (al, be) = phi.coeff(k);
                let (s, c) = (k as f64 * x).sin_cos();
                shifted.set_coeff(k, al * c + be * s, al * s - be * c);
            }
            let vals = shifted.sample_uniform(m);
            h / PI * compensated(vals.iter().zip(&kernel).map(|(u, v)| u * v))
        })
        .collect()
}

/// Largest `|coefficient route - kernel route|` of `f - V_{n,psi}(f)` over `xs`.
pub fn residual_consistency(
    psi: &PsiFunction,
    beta: f64,
    n: u64,
    phi: &FourierSeries,
    xs: &[f64],
) -> Result<f64> {
    let ke = KernelEvaluator::new(psi, beta, n)?;
    let tc = TaperCoefficients::new(psi, n)?;
    residual_consistency_with(&ke, &tc, phi, xs)
}

pub fn residual_consistency_with(
    ke: &KernelEvaluator,
    tc: &TaperCoefficients,
    phi: &FourierSeries,
    xs: &[f64],
) -> Result<f64> {
    let f = synthesize_class_function(ke.psi(), ke.beta(), phi, 0.0)?;
    let coeff_route = residual_series(&f, tc);
    let kernel_route = kernel_convolution(ke, phi, xs);
    Ok(xs
        .iter()
        .zip(kernel_route)
        .map(|(&x, k)| (coeff_route.eval(x) - k).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremalKind {
    /// `sign(Psi*) |Psi*|^{p'-1}`, normalised, for `1 < p < inf`.
    Holder,
    /// `sign(Psi*(x0 - t))`, for `p = inf`.
    Sign,
    /// A `cos^2` bump of unit mass at the kernel peak, for `p = 1`.
    MollifiedPeak,
}

/// Extremal `phi` of the duality `sup_{||phi||_p <= 1} (1/pi) int phi(t) Psi*(x0 - t) dt`.
#[derive(Debug, Clone)]
pub struct ExtremalPhi {
    kernel: KernelEvaluator,
    pub kind: ExtremalKind,
    pub p: Exponent,
    pub x0: f64,
    /// `||Psi*||_{p'}^{p'-1}` on the sampling grid (Holder kind).
    scale: f64,
    /// Centre, mass sign and width of the bump (peak kind).
    center: f64,
    sign: f64,
    pub width: Option<f64>,
    grid: usize,
}

/// How close an extremal `phi` comes to the dual norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityReport {
    pub p: Exponent,
    pub kind: ExtremalKind,
    pub x0: f64,
    /// `(1/pi) ||Psi*||_{p'}`.
    pub proxy: f64,
    /// `(1/pi) int phi(t) Psi*(x0 - t) dt`.
    pub pairing: f64,
    pub attainment: f64,
    pub phi_norm: f64,
    pub mean: f64,
    pub mean_flagged: bool,
    /// Attainment of `(phi - mean) / ||phi - mean||_p`.
    pub zero_mean_attainment: f64,
    pub width: Option<f64>,
    pub grid: usize,
}

impl ExtremalPhi {
    /// `x0` is snapped to the sampling grid `2 pi j / N`, `N >= ppw * K`.
    pub fn new(ke: &KernelEvaluator, p: Exponent, x0: f64, quad: &QuadratureSpec) -> Result<Self> {
        quad.validate()?;
        let grid = ((quad.points_per_wavelength * ke.truncation_index() as f64).ceil() as usize)
            .next_power_of_two()
            .max(1024);
        let h = TAU / grid as f64;
        let j0 = (x0.rem_euclid(TAU) / h).round() as usize % grid;
        let x0 = j0 as f64 * h;
        let q = p.conjugate();
        let mut phi = ExtremalPhi {
            kernel: ke.clone(),
            kind: ExtremalKind::Holder,
            p,
            x0,
            scale: 1.0,
            center: 0.0,
            sign: 1.0,
            width: None,
            grid,
        };
        if p.is_infinite() {
            phi.kind = ExtremalKind::Sign;
        } else if p.value() == 1.0 {
            let (t_max, _) = argmax_abs(ke, quad.points_per_wavelength);
            phi.kind = ExtremalKind::MollifiedPeak;
            phi.center = (x0 - t_max).rem_euclid(TAU);
            phi.sign = ke.eval(t_max).signum();
            phi.width = Some(8.0 * h);
        } else {
            let samples = ke.sample_uniform(grid);
            let s = (h * compensated(samples.iter().map(|v| v.abs().powf(q.value())))).powf(1.0 / q.value());
            phi.scale = s.powf(q.value() - 1.0);
        }
        Ok(phi)
    }

    fn bump(&self, t: f64) -> f64 {
        let w = self.width.unwrap_or(0.0);
        let d = crate::kernels::reduce_angle(t - self.center);
        if d.abs() >= 0.5 * w {
            0.0
        } else {
            self.sign * 2.0 / w * (PI * d / w).cos().powi(2)
        }
    }

    fn from_kernel_value(&self, v: f64) -> f64 {
        match self.kind {
            ExtremalKind::Sign => {
                if v == 0.0 {
                    0.0
                } else {
                    v.signum()
                }
            }
            ExtremalKind::Holder => {
                let q = self.p.conjugate().value();
                v.signum() * v.abs().powf(q - 1.0) / self.scale
            }
            ExtremalKind::MollifiedPeak => unreachable!("the bump does not depend on the kernel value"),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.kind {
            ExtremalKind::MollifiedPeak => self.bump(t),
            _ => self.from_kernel_value(self.kernel.eval(self.x0 - t)),
        }
    }

    /// Pairing, norm and mean diagnostics against the quadrature-accurate proxy.
    pub fn report(&self, quad: &QuadratureSpec) -> Result<DualityReport> {
        let q = self.p.conjugate();
        let proxy = lp_norm(&self.kernel, q, quad)?.value / PI;
        let m = self.grid;
        let h = TAU / m as f64;
        let (pairing, phi_norm, mean, centered_norm) = match self.kind {
            ExtremalKind::MollifiedPeak => {
                let w = self.width.expect("peak width");
                let a = self.center - 0.5 * w;
                let rule = gauss_quad::GaussLegendre::new(std::num::NonZeroUsize::new(16).expect("nonzero"));
                let pieces = 8;
                let mut pair = Vec::new();
                let mut mass = Vec::new();
                for i in 0..pieces {
                    let lo = a + w * i as f64 / pieces as f64;
                    let hi = lo + w / pieces as f64;
                    pair.push(rule.integrate(lo, hi, |t| self.bump(t) * self.kernel.eval(self.x0 - t)));
                    mass.push(rule.integrate(lo, hi, |t| self.bump(t).abs()));
                }
                let pairing = compensated(pair) / PI;
                let norm = compensated(mass);
                let mean = self.sign / TAU;
                let mut centered = Vec::new();
                for i in 0..pieces {
                    let lo = a + w * i as f64 / pieces as f64;
                    let hi = lo + w / pieces as f64;
                    centered.push(rule.integrate(lo, hi, |t| (self.bump(t) - mean).abs()));
                }
                let centered_norm = compensated(centered) + (TAU - w) * mean.abs();
                (pairing, norm, mean, centered_norm)
            }
            _ => {
                let samples = self.kernel.sample_uniform(m);
                let j0 = (self.x0 / h).round() as usize % m;
                // phi(t_j) uses Psi*(x0 - t_j) = samples[j0 - j]
                let phi: Vec<f64> = (0..m)
                    .map(|j| self.from_kernel_value(samples[(j0 + m - j) % m]))
                    .collect();
                let pairing = h / PI * compensated((0..m).map(|j| phi[j] * samples[(j0 + m - j) % m]));
                let mean = compensated(phi.iter().copied()) / m as f64;
                let norm_of = |shift: f64| -> f64 {
                    if self.p.is_infinite() {
                        phi.iter().fold(0.0f64, |acc, v| acc.max((v - shift).abs()))
                    } else {
                        let pv = self.p.value();
                        (h * compensated(phi.iter().map(|v| (v - shift).abs().powf(pv)))).powf(1.0 / pv)
                    }
                };
                (pairing, norm_of(0.0), mean, norm_of(mean))
            }
        };
        let attainment = pairing / proxy;
        Ok(DualityReport {
            p: self.p,
            kind: self.kind,
            x0: self.x0,
            proxy,
            pairing,
            attainment,
            phi_norm,
            mean,
            mean_flagged: mean.abs() > MEAN_FLAG,
            zero_mean_attainment: attainment * phi_norm / centered_norm,
            width: self.width,
            grid: m,
        })
    }
}

/// Builds the extremal `phi` for exponent `p` at `x0` and reports its attainment.
pub fn duality_extremal_phi(
    ke: &KernelEvaluator,
    p: Exponent,
    x0: f64,
    quad: &QuadratureSpec,
) -> Result<DualityReport> {
    ExtremalPhi::new(ke, p, x0, quad)?.report(quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn root_family() -> PsiFunction {
        PsiFunction::exp_power(1.0, 0.5).unwrap()
    }

    fn halving() -> PsiFunction {
        PsiFunction::exp_power(LN_2, 1.0).unwrap()
    }

    #[test]
    fn geometric_family_has_flat_taper() {
        for n in 2..40 {
            let tc = TaperCoefficients::new(&halving(), n).unwrap();
            assert_eq!(tc.gap, 1);
            assert!(tc.lambda.iter().all(|&l| l == 1.0), "n = {n}");
        }
    }

    #[test]
    fn taper_example() {
        let tc = TaperCoefficients::new(&root_family(), 9).unwrap();
        assert_eq!(tc.eta_floor, 13);
        assert_eq!(tc.flat_band_end(), 4);
        for k in 0..=5 {
            assert_eq!(tc.lambda[k], 1.0);
        }
        let want = |k: f64| 1.0 - (k - 5.0) / 4.0 * (-3.0 + k.sqrt()).exp();
        for k in 6..9 {
            assert_relative_eq!(tc.lambda[k], want(k as f64), max_relative = 1e-14);
        }
        assert_relative_eq!(tc.lambda[7], 0.649149779740341, max_relative = 1e-13);
        for (k, listed) in [(6, 0.85584), (7, 0.64916), (8, 0.36824)] {
            assert!((tc.lambda[k] - listed).abs() < 2e-5);
        }
        assert!(tc.is_monotone());
    }

    #[test]
    fn apply_vn_examples() {
        let tc = TaperCoefficients::new(&root_family(), 9).unwrap();
        let low = FourierSeries::harmonic(3, 1.0, -2.0);
        let out = apply_vn(&low, &tc);
        assert_eq!(out.degree(), 8);
        assert_eq!(out.coeff(3), (1.0, -2.0));
        let top = apply_vn(&FourierSeries::harmonic(8, 1.0, 0.0), &tc);
        assert_relative_eq!(top.coeff(8).0, 0.368245839907346, max_relative = 1e-13);
        let beyond = apply_vn(&FourierSeries::harmonic(12, 1.0, 1.0), &tc);
        assert_eq!(beyond.coeff(12), (0.0, 0.0));

        let tc = TaperCoefficients::new(&halving(), 6).unwrap();
        let f = FourierSeries::new(1.0, vec![1.0; 9], vec![0.5; 9]).unwrap();
        assert_eq!(apply_vn(&f, &tc), partial_sum(&f, 5));
    }

    #[test]
    fn synthesis_examples() {
        let f = synthesize_class_function(&halving(), 1.0, &FourierSeries::harmonic(1, 1.0, 0.0), 0.0).unwrap();
        assert_eq!(f.coeff(1), (0.0, 0.5));
        let f = synthesize_class_function(&halving(), 0.0, &FourierSeries::harmonic(2, 0.0, 1.0), 0.0).unwrap();
        assert_eq!(f.coeff(2), (0.0, 0.25));
        let bad = FourierSeries::constant(1.0);
        assert!(matches!(
            synthesize_class_function(&halving(), 0.0, &bad, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn synthesis_matches_convolution_quadrature() {
        let psi = root_family();
        let beta = 0.7;
        let phi = FourierSeries::new(
            0.0,
            (1..=12).map(|k| ((k * 7) % 5) as f64 / 5.0 - 0.4).collect(),
            (1..=12).map(|k| ((k * 3) % 7) as f64 / 7.0 - 0.5).collect(),
        )
        .unwrap();
        let f = synthesize_class_function(&psi, beta, &phi, 0.0).unwrap();
        // Psi_beta(t) = sum psi(k) cos(kt - theta), truncated far below 1e-12
        let (c, s) = phase(beta);
        let kmax = 1500;
        let w: Vec<f64> = (1..=kmax).map(|k| psi.eval(k as f64).unwrap()).collect();
        let kernel = FourierSeries::new(0.0, w.iter().map(|v| v * c).collect(), w.iter().map(|v| v * s).collect())
            .unwrap();
        let m = 4096;
        let ks = kernel.sample_uniform(m);
        let h = TAU / m as f64;
        for i in 0..16 {
            let x = TAU * i as f64 / 16.0 + 0.1;
            let conv = h / PI
                * compensated((0..m).map(|j| {
                    let t = crate::series::grid_point(j, m);
                    ks[j] * phi.eval(x - t)
                }));
            assert!((conv - f.eval(x)).abs() <= 1e-9, "x = {x}");
        }
    }

    #[test]
    fn residual_examples() {
        let psi = root_family();
        let xs: Vec<f64> = (0..16).map(|i| TAU * i as f64 / 16.0).collect();
        let phi = FourierSeries::harmonic(1, 1.0, 0.0);
        let d = residual_consistency(&psi, 0.0, 20, &phi, &xs).unwrap();
        assert!(d <= 1e-14);
        let phi = FourierSeries::new(
            0.0,
            (1..=30).map(|k| (k as f64).sin() / k as f64).collect(),
            (1..=30).map(|k| (k as f64 * 0.7).cos() / k as f64).collect(),
        )
        .unwrap();
        for beta in [0.0, 1.0] {
            assert!(residual_consistency(&psi, beta, 9, &phi, &xs).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn duality_examples() {
        let ke = KernelEvaluator::new(&root_family(), 0.0, 16).unwrap();
        let q = QuadratureSpec::default();
        let r2 = duality_extremal_phi(&ke, Exponent::TWO, 0.0, &q).unwrap();
        assert!((r2.attainment - 1.0).abs() <= 1e-9, "{r2:?}");
        assert!((r2.phi_norm - 1.0).abs() <= 1e-9);
        let rinf = duality_extremal_phi(&ke, Exponent::INF, 0.0, &q).unwrap();
        assert!(rinf.attainment >= 0.999 && rinf.attainment <= 1.0 + 1e-6, "{rinf:?}");
        assert_eq!(rinf.phi_norm, 1.0);
        let r1 = duality_extremal_phi(&ke, Exponent::ONE, 0.0, &q).unwrap();
        assert!(r1.attainment >= 0.98 && r1.attainment <= 1.0 + 1e-9, "{r1:?}");
        assert!((r1.phi_norm - 1.0).abs() <= 1e-9);
        assert!(r1.mean_flagged);
        let r4 = duality_extremal_phi(&ke, Exponent::new(4.0).unwrap(), 0.0, &q).unwrap();
        assert!(r4.attainment >= 0.999, "{r4:?}");
        assert!((r4.phi_norm - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn extremal_eval_matches_report_grid() {
        let ke = KernelEvaluator::new(&root_family(), 1.0, 16).unwrap();
        let phi = ExtremalPhi::new(&ke, Exponent::INF, 0.3, &QuadratureSpec::default()).unwrap();
        let v = phi.eval(1.0);
        assert_eq!(v, ke.eval(phi.x0 - 1.0).signum());
    }
}
