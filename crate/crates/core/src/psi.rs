//! Generators `psi(t)`, `t >= 1`, and their Stepanets characteristics.
//!
//! A generator is positive, continuous, convex and decreases to zero. Everything
//! here works in log space where possible: for the exp-power family `psi(t)`
//! underflows long before the probe grids used for membership diagnostics end,
//! while `ln psi(t) = -alpha t^r` stays representable.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Default relative tolerance of [`PsiFunction::inverse`]: `|psi(t) - y| <= tol * y`.
pub const TOL_INV: f64 = 1e-12;

/// Half-width of the window around an integer in which the floor of `eta` is
/// decided by comparing `psi` values instead of trusting the solved `eta`.
const FLOOR_GUARD: f64 = 1e-9;

const MAX_BISECTION_STEPS: usize = 4000;

/// User-supplied generator.
///
/// Contract: `value` is positive, nonincreasing and convex on `[1, inf)` and
/// tends to zero. `ln_value` must agree with `value().ln()` where the latter is
/// finite. `right_derivative` returns `psi'(t+0)`; `inverse(y)` returns the
/// unique `t >= 1` with `psi(t) = y`. `tail_bound(k)` returns a certified upper
/// bound of `sum_{j > k} psi(j)`. When it is absent, truncation falls back to a
/// geometric-ratio estimate that is only certified when `psi(k+1)/psi(k)` is
/// nonincreasing.
pub trait PsiGenerator: Send + Sync + fmt::Debug {
    fn value(&self, t: f64) -> f64;

    fn ln_value(&self, t: f64) -> f64 {
        self.value(t).ln()
    }

    fn right_derivative(&self, _t: f64) -> Option<f64> {
        None
    }

    fn inverse(&self, _y: f64) -> Option<f64> {
        None
    }

    fn tail_bound(&self, _k: u64) -> Option<f64> {
        None
    }

    fn label(&self) -> String {
        "custom".to_string()
    }
}

/// A generator `psi` of the class `M`.
#[derive(Clone)]
pub enum PsiFunction {
    /// `psi(t) = exp(-alpha t^r)`.
    ExpPower { alpha: f64, r: f64 },
    Custom(Arc<dyn PsiGenerator>),
}

impl fmt::Debug for PsiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PsiFunction::ExpPower { alpha, r } => {
                write!(f, "ExpPower {{ alpha: {alpha}, r: {r} }}")
            }
            PsiFunction::Custom(g) => write!(f, "Custom({})", g.label()),
        }
    }
}

/// `eta`, `mu` and the floor gap at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharacteristicProfile {
    pub t: f64,
    pub eta: f64,
    pub mu: f64,
    pub eta_gap: f64,
    /// `[eta(t)]`.
    pub eta_floor: i64,
    /// `[eta(n)] - n`, only defined when `t = n` is an integer.
    pub floor_gap: Option<i64>,
    /// `eta(eta(t))`.
    pub eta_eta: f64,
}

/// Finite-grid diagnostics for membership in `M+_inf`, `M'_inf`, `M''_inf`.
///
/// These summarise sampled data only; they are not proofs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipReport {
    /// `mu` strictly increasing on the grid and at least doubling overall.
    pub in_m_plus_inf: bool,
    /// Observed sup of `eta(t) - t`, reported when the gap stopped growing.
    pub gap_bounded_above: Option<f64>,
    /// Observed inf of `eta(t) - t`, reported when the gap stopped shrinking.
    pub gap_bounded_below: Option<f64>,
    pub probe_grid: Vec<f64>,
    pub mu: Vec<f64>,
    pub gap: Vec<f64>,
}

impl MembershipReport {
    fn from_samples(probe_grid: Vec<f64>, mu: Vec<f64>, gap: Vec<f64>) -> Self {
        let increasing = mu.windows(2).all(|w| w[1] > w[0] * (1.0 + 1e-9));
        let in_m_plus_inf = increasing
            && match (mu.first(), mu.last()) {
                (Some(&a), Some(&b)) => b >= 2.0 * a,
                _ => false,
            };
        let (sup, inf) = gap
            .iter()
            .fold((f64::NEG_INFINITY, f64::INFINITY), |(s, i), &g| {
                (s.max(g), i.min(g))
            });
        let tail = if gap.len() >= 2 {
            Some((gap[gap.len() - 2], gap[gap.len() - 1]))
        } else {
            None
        };
        let gap_bounded_above = match tail {
            Some((prev, last)) if last <= prev * (1.0 + 1e-6) => Some(sup),
            _ => None,
        };
        let gap_bounded_below = match tail {
            Some((prev, last)) if inf > 0.0 && last >= prev * (1.0 - 1e-6) => Some(inf),
            _ => None,
        };
        MembershipReport {
            in_m_plus_inf,
            gap_bounded_above,
            gap_bounded_below,
            probe_grid,
            mu,
            gap,
        }
    }

    /// Recomputes the flags from the stored probe data.
    pub fn recomputed(&self) -> MembershipReport {
        MembershipReport::from_samples(self.probe_grid.clone(), self.mu.clone(), self.gap.clone())
    }
}

/// Two-sided inequality `lower <= value <= upper`; one-sided checks use infinite
/// bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sandwich {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

impl Sandwich {
    pub fn holds(&self) -> bool {
        self.lower <= self.value && self.value <= self.upper
    }

    /// Smallest distance to either bound (negative when violated).
    pub fn margin(&self) -> f64 {
        (self.value - self.lower).min(self.upper - self.value)
    }

    /// Margin relative to `|value|`.
    pub fn relative_margin(&self) -> f64 {
        self.margin() / self.value.abs().max(f64::MIN_POSITIVE)
    }

    /// Holds with a margin exceeding `tol * |value|` on both sides.
    pub fn holds_strictly(&self, tol: f64) -> bool {
        self.relative_margin() > tol
    }
}

/// Default probe grid for membership diagnostics: `t = 1, 2, 4, ..., 2^20`.
pub fn default_probe_grid() -> Vec<f64> {
    (0..=20).map(|e| f64::from(1u32 << e)).collect()
}

impl PsiFunction {
    pub fn exp_power(alpha: f64, r: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Domain(format!("r must be positive, got {r}")));
        }
        Ok(PsiFunction::ExpPower { alpha, r })
    }

    pub fn custom<G: PsiGenerator + 'static>(generator: G) -> Self {
        PsiFunction::Custom(Arc::new(generator))
    }

    /// `(alpha, r)` for the exp-power family.
    pub fn exp_power_params(&self) -> Option<(f64, f64)> {
        match *self {
            PsiFunction::ExpPower { alpha, r } => Some((alpha, r)),
            PsiFunction::Custom(_) => None,
        }
    }

    pub fn family_name(&self) -> String {
        match self {
            PsiFunction::ExpPower { .. } => "exp-power".to_string(),
            PsiFunction::Custom(g) => g.label(),
        }
    }

    fn check_domain(t: f64) -> Result<()> {
        if t.is_nan() || t < 1.0 {
            Err(Error::Domain(format!("psi is defined for t >= 1, got t = {t}")))
        } else {
            Ok(())
        }
    }

    /// `psi(t)` without the domain check.
    pub(crate) fn value_at(&self, t: f64) -> f64 {
        match self {
            PsiFunction::ExpPower { alpha, r } => (-alpha * t.powf(*r)).exp(),
            PsiFunction::Custom(g) => g.value(t),
        }
    }

    /// `ln psi(t)` without the domain check.
    pub(crate) fn ln_at(&self, t: f64) -> f64 {
        match self {
            PsiFunction::ExpPower { alpha, r } => -alpha * t.powf(*r),
            PsiFunction::Custom(g) => g.ln_value(t),
        }
    }

    /// `psi(t)` for `t >= 1`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        Self::check_domain(t)?;
        Ok(self.value_at(t))
    }

    /// `ln psi(t)` for `t >= 1`.
    pub fn ln_eval(&self, t: f64) -> Result<f64> {
        Self::check_domain(t)?;
        Ok(self.ln_at(t))
    }

    /// Right derivative `psi'(t+0)`.
    pub fn right_derivative(&self, t: f64) -> Result<f64> {
        Self::check_domain(t)?;
        match self {
            PsiFunction::ExpPower { alpha, r } => {
                Ok(-alpha * r * t.powf(r - 1.0) * self.value_at(t))
            }
            PsiFunction::Custom(g) => g.right_derivative(t).ok_or_else(|| {
                Error::Capability(format!("generator '{}' has no right derivative", g.label()))
            }),
        }
    }

    /// Central-difference estimate of `psi'(t)`, falling back to a forward
    /// difference when `t - h < 1`.
    pub fn derivative_fd(&self, t: f64, h: f64) -> Result<f64> {
        Self::check_domain(t)?;
        if !(h > 0.0) {
            return Err(Error::Domain(format!("step must be positive, got {h}")));
        }
        if t - h >= 1.0 {
            Ok((self.value_at(t + h) - self.value_at(t - h)) / (2.0 * h))
        } else {
            Ok((self.value_at(t + h) - self.value_at(t)) / h)
        }
    }

    /// `psi(t) / |psi'(t+0)|`, computed through the logarithmic derivative.
    pub fn value_over_slope(&self, t: f64) -> Result<f64> {
        Self::check_domain(t)?;
        match self {
            PsiFunction::ExpPower { alpha, r } => Ok(t.powf(1.0 - r) / (alpha * r)),
            PsiFunction::Custom(_) => {
                let d = self.right_derivative(t)?;
                Ok(self.value_at(t) / d.abs())
            }
        }
    }

    /// Inverse through the family's closed form or the generator's own inverse.
    pub fn closed_inverse(&self, y: f64) -> Option<f64> {
        match self {
            PsiFunction::ExpPower { alpha, r } => {
                if y > 0.0 && y <= self.value_at(1.0) {
                    Some((-y.ln() / alpha).powf(1.0 / r))
                } else {
                    None
                }
            }
            PsiFunction::Custom(g) => g.inverse(y),
        }
    }

    /// `psi^{-1}(y)` by monotone bisection, `|psi(t) - y| <= TOL_INV * y`.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        self.inverse_with_tol(y, TOL_INV)
    }

    pub fn inverse_with_tol(&self, y: f64, tol: f64) -> Result<f64> {
        let top = self.value_at(1.0);
        if !(y > 0.0 && y <= top) {
            return Err(Error::Domain(format!("y must lie in (0, psi(1)] = (0, {top}], got {y}")));
        }
        self.solve_ln(y.ln(), 1.0, tol)
    }

    /// Solves `ln psi(s) = target` for `s >= start`, given `ln psi(start) >= target`.
    ///
    /// The bracket `[start, start + step]` is doubled until it contains the
    /// root, then bisected until it collapses to adjacent floats.
    fn solve_ln(&self, target: f64, start: f64, tol: f64) -> Result<f64> {
        let mut lo = start;
        let f_lo = self.ln_at(lo);
        if f_lo < target {
            return Err(Error::Domain(format!(
                "ln psi({start}) = {f_lo} is already below the target {target}"
            )));
        }
        if f_lo == target {
            return Ok(lo);
        }
        let mut step = start.max(1.0);
        let mut hi = lo + step;
        while self.ln_at(hi) > target {
            lo = hi;
            step *= 2.0;
            hi = lo + step;
            if !hi.is_finite() || hi > 1e300 {
                return Err(Error::NonConvergence(format!(
                    "no bracket found for ln psi = {target}; psi may not decay to zero"
                )));
            }
        }
        for _ in 0..MAX_BISECTION_STEPS {
            let mid = lo + 0.5 * (hi - lo);
            if mid <= lo || mid >= hi {
                break;
            }
            let f = self.ln_at(mid);
            if f == target {
                lo = mid;
                hi = mid;
                break;
            } else if f > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // Pick whichever end of the collapsed bracket is closer in value.
        let (el, eh) = ((self.ln_at(lo) - target).abs(), (self.ln_at(hi) - target).abs());
        let t = if el <= eh { lo } else { hi };
        let rel = (self.ln_at(t) - target).exp_m1().abs();
        // A bracket of adjacent floats is the representability limit for steep psi.
        if rel <= tol || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(t);
        }
        Err(Error::NonConvergence(format!(
            "inverse residual {rel:e} exceeds tolerance {tol:e} at t = {t}"
        )))
    }

    /// `eta(t) = psi^{-1}(psi(t)/2)`.
    pub fn eta(&self, t: f64) -> Result<f64> {
        self.eta_with_tol(t, TOL_INV)
    }

    fn eta_with_tol(&self, t: f64, tol: f64) -> Result<f64> {
        Self::check_domain(t)?;
        let target = self.ln_at(t) - std::f64::consts::LN_2;
        self.solve_ln(target, t, tol)
    }

    /// `[eta(t)]`, with the near-integer guard.
    ///
    /// When the solved `eta` is within `1e-9` of an integer `m`, it is re-solved
    /// at tolerance `1e-14` and the floor is decided by comparing `psi(m)` with
    /// `psi(t)/2` directly; equality within rounding counts as `eta = m`.
    pub fn eta_floor(&self, t: f64) -> Result<i64> {
        let eta = self.eta(t)?;
        self.floor_of_eta(t, eta)
    }

    fn floor_of_eta(&self, t: f64, eta: f64) -> Result<i64> {
        let m = eta.round();
        if (eta - m).abs() >= FLOOR_GUARD {
            return Ok(eta.floor() as i64);
        }
        let eta = self.eta_with_tol(t, 1e-14).unwrap_or(eta);
        let m = eta.round();
        if (eta - m).abs() >= FLOOR_GUARD {
            return Ok(eta.floor() as i64);
        }
        let target = self.ln_at(t) - std::f64::consts::LN_2;
        let at_m = self.ln_at(m);
        let slack = 64.0 * f64::EPSILON * target.abs().max(1.0);
        if (at_m - target).abs() <= slack || at_m >= target {
            Ok(m as i64)
        } else {
            Ok(m as i64 - 1)
        }
    }

    /// `eta`, `mu`, floor gap and `eta(eta(t))` at `t`.
    pub fn characteristics(&self, t: f64) -> Result<CharacteristicProfile> {
        let eta = self.eta(t)?;
        let eta_gap = eta - t;
        if !(eta_gap > 0.0) {
            return Err(Error::InvalidPsi(format!("eta(t) - t = {eta_gap} is not positive at t = {t}")));
        }
        let eta_floor = self.floor_of_eta(t, eta)?;
        let floor_gap = if t.fract() == 0.0 {
            Some(eta_floor - t as i64)
        } else {
            None
        };
        let eta_eta = self.eta(eta)?;
        Ok(CharacteristicProfile {
            t,
            eta,
            mu: t / eta_gap,
            eta_gap,
            eta_floor,
            floor_gap,
            eta_eta,
        })
    }

    /// `mu(t) = t / (eta(t) - t)`.
    pub fn mu(&self, t: f64) -> Result<f64> {
        let eta = self.eta(t)?;
        Ok(t / (eta - t))
    }

    /// Forward-difference estimate of `eta'(t+0)`.
    pub fn eta_derivative(&self, t: f64, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::Domain(format!("step must be positive, got {h}")));
        }
        let e0 = self.eta_with_tol(t, 1e-15)?;
        let e1 = self.eta_with_tol(t + h, 1e-15)?;
        Ok((e1 - e0) / h)
    }

    /// Default forward-difference step for [`PsiFunction::eta_derivative`].
    pub fn default_eta_step(t: f64) -> f64 {
        1e-5 * t.max(1.0)
    }

    /// Lemma-2 sandwich
    /// `b^2/(2(b+1)^2) (eta - t) <= psi(t)/|psi'(t)| <= 4(1 + 1/b)(eta - t)`.
    ///
    /// The caller is responsible for `mu >= b` on the relevant range.
    pub fn lemma2_margins(&self, t: f64, b: f64) -> Result<Sandwich> {
        if !(b > 0.0) {
            return Err(Error::Domain(format!("b must be positive, got {b}")));
        }
        let gap = self.eta(t)? - t;
        let value = self.value_over_slope(t)?;
        let q = b / (b + 1.0);
        Ok(Sandwich {
            lower: 0.5 * q * q * gap,
            value,
            upper: 4.0 * (1.0 + 1.0 / b) * gap,
        })
    }

    /// `(eta - t)/2 <= eta(eta(t)) - eta(t) < (1 + 1/b)(eta - t)`.
    pub fn iterated_gap_check(&self, t: f64, b: f64) -> Result<Sandwich> {
        let p = self.characteristics(t)?;
        Ok(Sandwich {
            lower: 0.5 * p.eta_gap,
            value: p.eta_eta - p.eta,
            upper: (1.0 + 1.0 / b) * p.eta_gap,
        })
    }

    /// `(1 - 1/a)(eta(n) - n) < [eta(n)] - n`.
    pub fn floor_gap_check(&self, n: u64, a: f64) -> Result<Sandwich> {
        let p = self.characteristics(n as f64)?;
        Ok(Sandwich {
            lower: (1.0 - 1.0 / a) * p.eta_gap,
            value: (p.eta_floor - n as i64) as f64,
            upper: f64::INFINITY,
        })
    }

    /// `Delta psi(n) <= |psi'(n)| <= 2(b+1)^2/b^2 psi(n)/(eta(n) - n)`.
    pub fn slope_check(&self, n: u64, b: f64) -> Result<Sandwich> {
        let t = n as f64;
        let gap = self.eta(t)? - t;
        let psi_n = self.value_at(t);
        let q = (b + 1.0) / b;
        Ok(Sandwich {
            lower: psi_n - self.value_at(t + 1.0),
            value: self.right_derivative(t)?.abs(),
            upper: 2.0 * q * q * psi_n / gap,
        })
    }

    /// `eta'(t) <= 1 + 1/b`.
    pub fn eta_slope_check(&self, t: f64, b: f64) -> Result<Sandwich> {
        let d = self.eta_derivative(t, Self::default_eta_step(t))?;
        Ok(Sandwich {
            lower: f64::NEG_INFINITY,
            value: d,
            upper: 1.0 + 1.0 / b,
        })
    }

    /// Samples `mu` and `eta - t` on `probe_grid`.
    pub fn membership(&self, probe_grid: &[f64]) -> Result<MembershipReport> {
        let mut mu = Vec::with_capacity(probe_grid.len());
        let mut gap = Vec::with_capacity(probe_grid.len());
        for &t in probe_grid {
            let eta = self.eta(t)?;
            gap.push(eta - t);
            mu.push(t / (eta - t));
        }
        Ok(MembershipReport::from_samples(probe_grid.to_vec(), mu, gap))
    }

    /// Certified upper bound of `sum_{j > k} psi(j)`, when one is known.
    ///
    /// For `exp(-alpha t^r)` with `r < 1` the sum is dominated by
    /// `int_k^inf psi = Gamma(1/r, alpha k^r) / (r alpha^{1/r})`, and
    /// `Gamma(s, x) <= x^{s-1} e^{-x} / (1 - (s-1)/x)` for `x > s - 1`.
    /// For `r >= 1` the ratio `psi(j+1)/psi(j)` is nonincreasing and the
    /// geometric series through the first ratio is a bound.
    pub fn tail_bound(&self, k: u64) -> Option<f64> {
        match *self {
            PsiFunction::ExpPower { alpha, r } => {
                let kf = k.max(1) as f64;
                if r < 1.0 {
                    let x = alpha * kf.powf(r);
                    let s = 1.0 / r;
                    if x <= s - 1.0 {
                        return None;
                    }
                    let lead = (-x).exp() * kf.powf(1.0 - r) / (alpha * r);
                    Some(lead / (1.0 - (s - 1.0) / x))
                } else {
                    let p1 = self.value_at(kf + 1.0);
                    let ratio = (self.ln_at(kf + 2.0) - self.ln_at(kf + 1.0)).exp();
                    (ratio < 1.0).then(|| p1 / (1.0 - ratio))
                }
            }
            PsiFunction::Custom(ref g) => g.tail_bound(k),
        }
    }
}
