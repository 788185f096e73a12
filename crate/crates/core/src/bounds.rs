//! Explicit constants, exp-power closed forms and the theorem verification harness.
//!
//! The harness certifies `C_a X <= (1/pi) ||Psi*||_q <= C*_{a,b} X` where
//! `q = p'` and `X = psi(n)(eta(n) - n)^{1/p}` in the `C`-metric mode, and
//! `q = s` and `X = psi(n)(eta(n) - n)^{1/s'}` in the `L_s` mode. The lower
//! inequality is the necessary consequence of `C_a X <= E_n <= proxy`; the true
//! best approximation `E_n` is not computed.

use std::f64::consts::{LN_2, PI};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{envelope_check_uniform, tail_sum_bound_check_uniform, CheckStatus, KernelEvaluator};
use crate::norms::{Exponent, NormCache, NormEstimate, QuadratureSpec};
use crate::psi::{PsiFunction, Sandwich};

/// Relative part of the pass tolerance.
pub const REL_TOL: f64 = 1e-6;

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Domain(msg()))
    }
}

/// `C_a = pi/(96(1+pi^2)^2) (a-1)^2(a-2)^2/(a^3(3a-4))`, `a > 2`.
pub fn const_ca(a: f64) -> Result<f64> {
    require(a > 2.0 && a.is_finite(), || format!("C_a needs a > 2, got {a}"))?;
    let pi2 = PI * PI;
    Ok(PI / (96.0 * (1.0 + pi2).powi(2)) * (a - 1.0).powi(2) * (a - 2.0).powi(2) / (a.powi(3) * (3.0 * a - 4.0)))
}

/// `C*_{a,b} = 2(1+pi^2)/pi (2b/(b-2) + a/(a-1))`, `a > 1`, `b > 2`.
pub fn const_cab_star(a: f64, b: f64) -> Result<f64> {
    require(a > 1.0 && a.is_finite(), || format!("C*_(a,b) needs a > 1, got {a}"))?;
    require(b > 2.0 && b.is_finite(), || format!("C*_(a,b) needs b > 2, got {b}"))?;
    Ok(2.0 * (1.0 + PI * PI) / PI * (2.0 * b / (b - 2.0) + a / (a - 1.0)))
}

/// `C_{a,b} = (1/pi) max{2b/(b-2) + 1/a, 2 pi}`, `a > 0`, `b > 2`.
pub fn const_cab(a: f64, b: f64) -> Result<f64> {
    require(a > 0.0 && a.is_finite(), || format!("C_(a,b) needs a > 0, got {a}"))?;
    require(b > 2.0 && b.is_finite(), || format!("C_(a,b) needs b > 2, got {b}"))?;
    Ok((2.0 * b / (b - 2.0) + 1.0 / a).max(2.0 * PI) / PI)
}

/// Which argument of the minimum defines `C_{a,b}(p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CabBranch {
    /// `(2p)^{1-1/p} C_{a,b}`.
    Scaled,
    /// `C*_{a,b}`.
    Star,
}

/// `C_{a,b}(p) = min{(2p)^{1-1/p} C_{a,b}, C*_{a,b}}`, `1 <= p < inf`.
pub fn const_cab_p(a: f64, b: f64, p: f64) -> Result<f64> {
    Ok(cab_p_with_branch(a, b, p)?.0)
}

pub fn cab_p_with_branch(a: f64, b: f64, p: f64) -> Result<(f64, CabBranch)> {
    require(p >= 1.0 && p.is_finite(), || format!("C_(a,b)(p) needs 1 <= p < inf, got {p}"))?;
    let scaled = (2.0 * p).powf(1.0 - 1.0 / p) * const_cab(a, b)?;
    let star = const_cab_star(a, b)?;
    Ok(if scaled < star {
        (scaled, CabBranch::Scaled)
    } else {
        (star, CabBranch::Star)
    })
}

/// Smallest integer `p` at which `C_{a,b}(p)` switches to `C*_{a,b}`, if any
/// below `p_max`. The scaled branch is increasing in `p`, so the switch is
/// one-way.
pub fn cab_p_crossover(a: f64, b: f64, p_max: u64) -> Result<Option<u64>> {
    for p in 1..=p_max {
        if cab_p_with_branch(a, b, p as f64)?.1 == CabBranch::Star {
            return Ok(Some(p));
        }
    }
    Ok(None)
}

/// Whether `C_{a,b}(p)` takes the scaled branch for all `1 <= p <= low_max` and
/// `C*_{a,b}` for all `p >= high_min` (integer `p`).
pub fn cab_p_split_holds(a: f64, b: f64, low_max: u64, high_min: u64) -> Result<bool> {
    Ok(match cab_p_crossover(a, b, high_min)? {
        Some(p) => p > low_max && p <= high_min,
        None => false,
    })
}

/// The constants of one `(a, b)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    pub a: f64,
    pub b: f64,
    pub c_a: f64,
    pub c_star_ab: f64,
    pub c_ab: f64,
}

impl Constants {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        Ok(Constants {
            a,
            b,
            c_a: const_ca(a)?,
            c_star_ab: const_cab_star(a, b)?,
            c_ab: const_cab(a, b)?,
        })
    }

    pub fn c_ab_p(&self, p: f64) -> Result<f64> {
        const_cab_p(self.a, self.b, p)
    }
}

fn check_exp_power(alpha: f64, r: f64) -> Result<()> {
    require(alpha > 0.0 && alpha.is_finite(), || format!("alpha must be positive, got {alpha}"))?;
    require(r > 0.0 && r < 1.0, || format!("the closed forms need r in (0, 1), got {r}"))
}

/// `eta(n) - n = n((1 + ln2/(alpha n^r))^{1/r} - 1)` for `exp(-alpha t^r)`.
pub fn exp_power_gap(alpha: f64, r: f64, n: f64) -> f64 {
    n * ((LN_2 / (alpha * n.powf(r))).ln_1p() / r).exp_m1()
}

/// `a(alpha, r) = ln2/(alpha r) (1 + (2 r alpha/ln2)^{1/(1-r)})^{1-r}`.
pub fn threshold_a(alpha: f64, r: f64) -> Result<f64> {
    check_exp_power(alpha, r)?;
    let inner = 1.0 + (2.0 * r * alpha / LN_2).powf(1.0 / (1.0 - r));
    Ok(LN_2 / (alpha * r) * inner.powf(1.0 - r))
}

/// `b(alpha, r)`, the lower bound of `mu(n)` for `n >= n_min`.
pub fn threshold_b(alpha: f64, r: f64) -> Result<f64> {
    check_exp_power(alpha, r)?;
    let base = 1.0 + 2.0 * (LN_2 / (alpha * (3f64.powf(r) - 2f64.powf(r)))).powf(1.0 / r);
    let inner = LN_2 / alpha * base.powf(-r);
    Ok(1.0 / ((1.0 + inner).powf(1.0 / r) - 1.0))
}

/// `n_min = ceil(max{1 + (2 r alpha/ln2)^{1/(1-r)}, 1 + 2(ln2/(alpha(3^r - 2^r)))^{1/r}})`.
pub fn threshold_n(alpha: f64, r: f64) -> Result<u64> {
    check_exp_power(alpha, r)?;
    let first = 1.0 + (2.0 * r * alpha / LN_2).powf(1.0 / (1.0 - r));
    let second = 1.0 + 2.0 * (LN_2 / (alpha * (3f64.powf(r) - 2f64.powf(r)))).powf(1.0 / r);
    Ok(first.max(second).ceil() as u64)
}

/// Closed-form characteristics of `exp(-alpha t^r)`, `0 < r < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpPowerProfile {
    pub alpha: f64,
    pub r: f64,
    pub n: u64,
    pub eta_gap: f64,
    pub mu: f64,
    pub a_thresh: f64,
    pub b_thresh: f64,
    pub n_min: u64,
    pub q123_lower: f64,
    pub q123_upper: f64,
}

impl ExpPowerProfile {
    pub fn q123(&self) -> Sandwich {
        Sandwich {
            lower: self.q123_lower,
            value: self.eta_gap,
            upper: self.q123_upper,
        }
    }
}

pub fn exp_power_characteristics(alpha: f64, r: f64, n: u64) -> Result<ExpPowerProfile> {
    check_exp_power(alpha, r)?;
    require(n >= 1, || "n must be at least 1".to_string())?;
    let nf = n as f64;
    let eta_gap = exp_power_gap(alpha, r, nf);
    let base = LN_2 / (alpha * r) * nf.powf(1.0 - r);
    Ok(ExpPowerProfile {
        alpha,
        r,
        n,
        eta_gap,
        mu: nf / eta_gap,
        a_thresh: threshold_a(alpha, r)?,
        b_thresh: threshold_b(alpha, r)?,
        n_min: threshold_n(alpha, r)?,
        q123_lower: base,
        q123_upper: (1.0 + LN_2 / alpha).powf((1.0 - r) / r) * base,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Uniform metric, class `C^psi_{beta,p}`: proxy uses `||Psi*||_{p'}`.
    Theorem1,
    /// Integral metric `L_s`, class `L^psi_{beta,1}`: proxy uses `||Psi*||_s`.
    Theorem2,
}

impl Mode {
    /// Exponent of the kernel norm in the proxy.
    pub fn kernel_exponent(self, p_or_s: Exponent) -> Exponent {
        match self {
            Mode::Theorem1 => p_or_s.conjugate(),
            Mode::Theorem2 => p_or_s,
        }
    }

    /// Power of `eta(n) - n` in `X`.
    pub fn gap_power(self, p_or_s: Exponent) -> f64 {
        match self {
            Mode::Theorem1 => p_or_s.reciprocal(),
            Mode::Theorem2 => p_or_s.conjugate().reciprocal(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowStatus {
    Pass,
    Fail,
    PreconditionViolated(String),
    Error(String),
}

/// One verified `(n, mode, p or s)` configuration.
///
/// Serialises to exactly the sixteen public fields; unavailable numbers are
/// `null` and their pass flags `false`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub family: String,
    pub alpha: Option<f64>,
    pub r: Option<f64>,
    pub beta: f64,
    pub n: u64,
    pub mode: Mode,
    pub p_or_s: Exponent,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "X")]
    pub x: Option<f64>,
    pub lower: Option<f64>,
    pub proxy: Option<f64>,
    pub upper: Option<f64>,
    pub pass_lower: bool,
    pub pass_upper: bool,
    pub tol: Option<f64>,
    #[serde(skip)]
    pub status: RowStatus,
}

impl BoundReport {
    /// Pass flags recomputed from the stored numbers.
    pub fn recomputed_flags(&self) -> (bool, bool) {
        match (self.lower, self.proxy, self.upper, self.tol) {
            (Some(l), Some(p), Some(u), Some(t)) => (l <= p + t, p <= u + t),
            _ => (false, false),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == RowStatus::Pass
    }
}

/// `(a, b)` and quadrature used by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Defaults to `a(alpha, r)` for exp-power with `0 < r < 1`, else `eta(n) - n`.
    pub a: Option<f64>,
    /// Defaults to `b(alpha, r)` for exp-power with `0 < r < 1`, else `mu(n)`.
    pub b: Option<f64>,
    pub quad: QuadratureSpec,
    /// Absolute tail budget; defaults to `1e-15 psi(n)(eta(n) - n)`.
    pub tail_eps: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            a: None,
            b: None,
            quad: QuadratureSpec::default(),
            tail_eps: None,
        }
    }
}

fn default_ab(psi: &PsiFunction, n: u64, opts: &VerifyOptions) -> Result<(f64, f64)> {
    let from_psi = || -> Result<(f64, f64)> {
        if let Some((alpha, r)) = psi.exp_power_params() {
            if r > 0.0 && r < 1.0 {
                return Ok((threshold_a(alpha, r)?, threshold_b(alpha, r)?));
            }
        }
        let p = psi.characteristics(n as f64)?;
        Ok((p.eta_gap, p.mu))
    };
    match (opts.a, opts.b) {
        (Some(a), Some(b)) => Ok((a, b)),
        (a, b) => {
            let (da, db) = from_psi()?;
            Ok((a.unwrap_or(da), b.unwrap_or(db)))
        }
    }
}

fn precondition_message(eta_gap: f64, mu: f64, a: f64, b: f64) -> Option<String> {
    if !(a > 2.0) {
        Some(format!("a = {a} must exceed 2"))
    } else if !(b > 2.0) {
        Some(format!("b = {b} must exceed 2"))
    } else if eta_gap < a {
        Some(format!("eta(n) - n = {eta_gap} is below a = {a}"))
    } else if mu < b {
        Some(format!("mu(n) = {mu} is below b = {b}"))
    } else {
        None
    }
}

fn blank_row(psi: &PsiFunction, beta: f64, n: u64, mode: Mode, p: Exponent, a: f64, b: f64, status: RowStatus) -> BoundReport {
    let (alpha, r) = psi.exp_power_params().unzip();
    BoundReport {
        family: psi.family_name(),
        alpha,
        r,
        beta,
        n,
        mode,
        p_or_s: p,
        a,
        b,
        x: None,
        lower: None,
        proxy: None,
        upper: None,
        pass_lower: false,
        pass_upper: false,
        tol: None,
        status,
    }
}

fn error_row(psi: &PsiFunction, beta: f64, n: u64, mode: Mode, p: Exponent, e: &Error) -> BoundReport {
    let status = match e {
        Error::Precondition(m) => RowStatus::PreconditionViolated(m.clone()),
        Error::DegenerateGap { .. } => RowStatus::PreconditionViolated(e.to_string()),
        other => RowStatus::Error(other.to_string()),
    };
    blank_row(psi, beta, n, mode, p, f64::NAN, f64::NAN, status)
}

fn finish_row(
    ke: &KernelEvaluator,
    mode: Mode,
    p: Exponent,
    a: f64,
    b: f64,
    consts: &Constants,
    norm: &NormEstimate,
) -> BoundReport {
    let x = ke.psi_n() * ke.eta_gap().powf(mode.gap_power(p));
    let proxy = norm.value / PI;
    let tol = REL_TOL * x + norm.error / PI;
    let lower = consts.c_a * x;
    let upper = consts.c_star_ab * x;
    let pass_lower = lower <= proxy + tol;
    let pass_upper = proxy <= upper + tol;
    let mut row = blank_row(ke.psi(), ke.beta(), ke.n(), mode, p, a, b, RowStatus::Pass);
    row.x = Some(x);
    row.lower = Some(lower);
    row.proxy = Some(proxy);
    row.upper = Some(upper);
    row.pass_lower = pass_lower;
    row.pass_upper = pass_upper;
    row.tol = Some(tol);
    if !(pass_lower && pass_upper) {
        row.status = RowStatus::Fail;
    }
    row
}

/// All `(mode, exponent)` rows for one `(n, beta)`, sharing one kernel and its samples.
pub fn verify_point(
    psi: &PsiFunction,
    beta: f64,
    n: u64,
    requests: &[(Mode, Exponent)],
    opts: &VerifyOptions,
) -> Vec<BoundReport> {
    let errors = |e: &Error| requests.iter().map(|&(m, p)| error_row(psi, beta, n, m, p, e)).collect();
    let (a, b) = match default_ab(psi, n, opts) {
        Ok(v) => v,
        Err(e) => return errors(&e),
    };
    let profile = match psi.characteristics(n as f64) {
        Ok(v) => v,
        Err(e) => return errors(&e),
    };
    if let Some(msg) = precondition_message(profile.eta_gap, profile.mu, a, b) {
        return requests
            .iter()
            .map(|&(m, p)| blank_row(psi, beta, n, m, p, a, b, RowStatus::PreconditionViolated(msg.clone())))
            .collect();
    }
    let consts = match Constants::new(a, b) {
        Ok(c) => c,
        Err(e) => return errors(&e),
    };
    let built = match opts.tail_eps {
        Some(eps) => KernelEvaluator::with_tail_eps(psi, beta, n, eps),
        None => KernelEvaluator::new(psi, beta, n),
    };
    let ke = match built {
        Ok(k) => k,
        Err(e) => return errors(&e),
    };
    let mut cache = NormCache::new(ke.series());
    let mut norms: Vec<(Exponent, Result<NormEstimate>)> = Vec::new();
    requests
        .iter()
        .map(|&(mode, p)| {
            let q = mode.kernel_exponent(p);
            let est = match norms.iter().find(|(e, _)| *e == q) {
                Some((_, r)) => r.clone(),
                None => {
                    let r = cache.lp(q, &opts.quad);
                    norms.push((q, r.clone()));
                    r
                }
            };
            match est {
                Ok(norm) => {
                    let mut row = finish_row(&ke, mode, p, a, b, &consts, &norm);
                    row.a = a;
                    row.b = b;
                    row
                }
                Err(e) => {
                    let mut row = error_row(psi, beta, n, mode, p, &e);
                    row.a = a;
                    row.b = b;
                    row
                }
            }
        })
        .collect()
}

/// Theorem 1 check at one `(n, p)`.
pub fn verify_theorem1(psi: &PsiFunction, beta: f64, p: Exponent, n: u64, opts: &VerifyOptions) -> BoundReport {
    verify_point(psi, beta, n, &[(Mode::Theorem1, p)], opts).remove(0)
}

/// Theorem 2 check at one `(n, s)`.
pub fn verify_theorem2(psi: &PsiFunction, beta: f64, s: Exponent, n: u64, opts: &VerifyOptions) -> BoundReport {
    verify_point(psi, beta, n, &[(Mode::Theorem2, s)], opts).remove(0)
}

/// Rows for every `n` in `ns` and every `beta`, ordered by `(n, beta, request)`.
pub fn verify_grid(
    psi: &PsiFunction,
    betas: &[f64],
    ns: &[u64],
    requests: &[(Mode, Exponent)],
    opts: &VerifyOptions,
) -> Vec<BoundReport> {
    let points: Vec<(u64, f64)> = ns.iter().flat_map(|&n| betas.iter().map(move |&b| (n, b))).collect();
    points
        .par_iter()
        .map(|&(n, beta)| verify_point(psi, beta, n, requests, opts))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Counts of row outcomes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub precondition_violated: usize,
    pub errored: usize,
}

impl Summary {
    pub fn of(rows: &[BoundReport]) -> Self {
        let mut s = Summary {
            total: rows.len(),
            ..Summary::default()
        };
        for r in rows {
            match r.status {
                RowStatus::Pass => s.passed += 1,
                RowStatus::Fail => s.failed += 1,
                RowStatus::PreconditionViolated(_) => s.precondition_violated += 1,
                RowStatus::Error(_) => s.errored += 1,
            }
        }
        s
    }
}

/// `proxy / (exp(-alpha n^r) n^{(1-r) e})` with `e = 1/p` (Theorem 1) or `1/s'` (Theorem 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsympRow {
    pub n: u64,
    pub proxy: f64,
    pub reference: f64,
    pub ratio: f64,
    /// `proxy / X`, to be compared with `[C_a, C*_{a,b}]`.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsympScan {
    pub alpha: f64,
    pub r: f64,
    pub beta: f64,
    pub mode: Mode,
    pub p_or_s: Exponent,
    pub rows: Vec<AsympRow>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `max_ratio / min_ratio`.
    pub spread: f64,
    pub c_a: f64,
    pub c_star_ab: f64,
}

impl AsympScan {
    /// Every `proxy / X` lies in `[C_a, C*_{a,b}]`.
    pub fn normalized_within_constants(&self) -> bool {
        self.rows
            .iter()
            .all(|r| self.c_a <= r.normalized * (1.0 + REL_TOL) && r.normalized <= self.c_star_ab * (1.0 + REL_TOL))
    }
}

pub fn asymp_scan(
    alpha: f64,
    r: f64,
    beta: f64,
    mode: Mode,
    p_or_s: Exponent,
    ns: &[u64],
    opts: &VerifyOptions,
) -> Result<AsympScan> {
    check_exp_power(alpha, r)?;
    let n_min = threshold_n(alpha, r)?;
    if let Some(&bad) = ns.iter().find(|&&n| n < n_min) {
        return Err(Error::Precondition(format!("n = {bad} is below n_min = {n_min}")));
    }
    let psi = PsiFunction::exp_power(alpha, r)?;
    let rows = verify_grid(&psi, &[beta], ns, &[(mode, p_or_s)], opts);
    let consts = Constants::new(threshold_a(alpha, r)?, threshold_b(alpha, r)?)?;
    let e = mode.gap_power(p_or_s);
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let (Some(proxy), Some(x)) = (row.proxy, row.x) else {
            return Err(match row.status {
                RowStatus::PreconditionViolated(m) => Error::Precondition(m),
                RowStatus::Error(m) => Error::NonConvergence(m),
                _ => Error::NonConvergence(format!("no proxy at n = {}", row.n)),
            });
        };
        let nf = row.n as f64;
        let reference = (-alpha * nf.powf(r)).exp() * nf.powf((1.0 - r) * e);
        out.push(AsympRow {
            n: row.n,
            proxy,
            reference,
            ratio: proxy / reference,
            normalized: proxy / x,
        });
    }
    let min_ratio = out.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = out.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(AsympScan {
        alpha,
        r,
        beta,
        mode,
        p_or_s,
        rows: out,
        min_ratio,
        max_ratio,
        spread: max_ratio / min_ratio,
        c_a: consts.c_a,
        c_star_ab: consts.c_star_ab,
    })
}

/// One row of the corollary table (nine columns).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorollaryRow {
    pub n: u64,
    /// `2` for the uniform metric, `4` for the `L_s` metric.
    pub corollary: u8,
    pub exponent: Exponent,
    pub alpha: f64,
    pub r: f64,
    pub beta: f64,
    pub lower: Option<f64>,
    pub proxy: Option<f64>,
    pub upper: Option<f64>,
}

/// Closed-form bounds `C exp(-alpha n^r) n^e ((1 + ln2/(alpha n^r))^{1/r} - 1)^e`
/// next to the kernel proxy, with `e = 1/p` (uniform metric) or `1/s'` (`L_s`).
pub fn corollary_table(
    alpha: f64,
    r: f64,
    beta: f64,
    mode: Mode,
    exponent: Exponent,
    ns: &[u64],
    opts: &VerifyOptions,
) -> Result<Vec<CorollaryRow>> {
    check_exp_power(alpha, r)?;
    let consts = Constants::new(threshold_a(alpha, r)?, threshold_b(alpha, r)?)?;
    let psi = PsiFunction::exp_power(alpha, r)?;
    let e = mode.gap_power(exponent);
    let rows = verify_grid(&psi, &[beta], ns, &[(mode, exponent)], opts);
    Ok(rows
        .into_iter()
        .map(|row| {
            let nf = row.n as f64;
            let shape = ((LN_2 / (alpha * nf.powf(r))).ln_1p() / r).exp_m1();
            let closed = (-alpha * nf.powf(r)).exp() * nf.powf(e) * shape.powf(e);
            CorollaryRow {
                n: row.n,
                corollary: match mode {
                    Mode::Theorem1 => 2,
                    Mode::Theorem2 => 4,
                },
                exponent,
                alpha,
                r,
                beta,
                lower: Some(consts.c_a * closed),
                proxy: row.proxy,
                upper: Some(consts.c_star_ab * closed),
            }
        })
        .collect())
}

pub const COROLLARY_HEADER: [&str; 9] = ["n", "corollary", "exponent", "alpha", "r", "beta", "lower", "proxy", "upper"];

pub const REPORT_HEADER: [&str; 16] = [
    "family", "alpha", "r", "beta", "n", "mode", "p_or_s", "a", "b", "X", "lower", "proxy", "upper", "pass_lower",
    "pass_upper", "tol",
];

fn csv_err(e: csv::Error) -> Error {
    Error::Domain(format!("csv output failed: {e}"))
}

/// Writes rows as CSV with a header of their field names.
pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Domain(format!("csv output failed: {e}")))
}

/// Writes any serialisable value as pretty JSON followed by a newline.
pub fn write_json<W: Write, T: Serialize + ?Sized>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Domain(format!("json output failed: {e}")))?;
    writeln!(out).map_err(|e| Error::Domain(format!("json output failed: {e}")))
}

/// Outcome of every pointwise inequality at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub n: u64,
    pub a: f64,
    pub b: f64,
    pub lemma2: Sandwich,
    pub iterated_gap: Sandwich,
    pub floor_gap: Sandwich,
    pub eta_slope: Sandwich,
    pub slope: Sandwich,
    pub q123: Option<Sandwich>,
    pub envelopes: CheckStatus,
    pub envelope_worst_decay: f64,
    pub envelope_worst_uniform: f64,
    pub tail: CheckStatus,
    pub tail_worst: f64,
}

impl InequalityReport {
    /// All sandwiches hold with a relative margin above `tol` and all scans pass.
    pub fn all_hold(&self, tol: f64) -> bool {
        let sandwiches = [self.lemma2, self.iterated_gap, self.floor_gap, self.eta_slope, self.slope];
        sandwiches.iter().all(|s| s.holds_strictly(tol))
            && self.q123.map_or(true, |s| s.holds_strictly(tol))
            && self.envelopes == CheckStatus::Pass
            && self.tail == CheckStatus::Pass
    }

    /// Names of the checks that do not hold with margin `tol`.
    pub fn failures(&self, tol: f64) -> Vec<&'static str> {
        let mut out = Vec::new();
        let named = [
            ("lemma2", self.lemma2),
            ("iterated_gap", self.iterated_gap),
            ("floor_gap", self.floor_gap),
            ("eta_slope", self.eta_slope),
            ("slope", self.slope),
        ];
        for (name, s) in named {
            if !s.holds_strictly(tol) {
                out.push(name);
            }
        }
        if let Some(s) = self.q123 {
            if !s.holds_strictly(tol) {
                out.push("q123");
            }
        }
        if self.envelopes != CheckStatus::Pass {
            out.push("envelopes");
        }
        if self.tail != CheckStatus::Pass {
            out.push("tail");
        }
        out
    }
}

/// Lemma 2, the characteristic inequalities, the `q123` bracket (exp-power,
/// `0 < r < 1`) and the kernel envelopes at `n`, with `(a, b)` as in the harness.
pub fn inequality_suite(
    psi: &PsiFunction,
    beta: f64,
    n: u64,
    grid_points: usize,
    opts: &VerifyOptions,
) -> Result<InequalityReport> {
    let (a, b) = default_ab(psi, n, opts)?;
    let nf = n as f64;
    let profile = psi.characteristics(nf)?;
    if let Some(msg) = precondition_message(profile.eta_gap, profile.mu, a, b) {
        return Err(Error::Precondition(msg));
    }
    let q123 = match psi.exp_power_params() {
        Some((alpha, r)) if r > 0.0 && r < 1.0 => Some(exp_power_characteristics(alpha, r, n)?.q123()),
        _ => None,
    };
    let ke = match opts.tail_eps {
        Some(eps) => KernelEvaluator::with_tail_eps(psi, beta, n, eps)?,
        None => KernelEvaluator::new(psi, beta, n)?,
    };
    let env = envelope_check_uniform(&ke, a, b, grid_points);
    let tail = tail_sum_bound_check_uniform(&ke, a, b, grid_points);
    Ok(InequalityReport {
        n,
        a,
        b,
        lemma2: psi.lemma2_margins(nf, b)?,
        iterated_gap: psi.iterated_gap_check(nf, b)?,
        floor_gap: psi.floor_gap_check(n, a)?,
        eta_slope: psi.eta_slope_check(nf, b)?,
        slope: psi.slope_check(n, b)?,
        q123,
        envelopes: env.status,
        envelope_worst_decay: env.decay.worst_ratio,
        envelope_worst_uniform: env.uniform.worst_ratio,
        tail: tail.status,
        tail_worst: tail.scan.worst_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constants_reproduce_oracle() {
        assert_relative_eq!(const_ca(3.0).unwrap(), 8.20686682384352e-6, max_relative = 1e-12);
        assert_relative_eq!(const_cab_star(3.0, 3.0).unwrap(), 51.8985380966037587, max_relative = 1e-13);
        assert_relative_eq!(const_cab(3.0, 3.0).unwrap(), 2.01596261249734, max_relative = 1e-13);
        assert_relative_eq!(const_cab_star(2.4338, 2.1129).unwrap(), 270.75142817360165, max_relative = 1e-12);
        assert!((const_cab_star(2.4338, 2.1129).unwrap() - 270.6).abs() < 0.2);
        assert!(matches!(const_ca(2.0), Err(Error::Domain(_))));
        assert!(matches!(const_cab_star(3.0, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_shapes() {
        assert!(const_ca(2.0 + 1e-6).unwrap() < 1e-16);
        let grid: Vec<f64> = (1..=80).map(|i| 2.0 + 0.1 * i as f64).collect();
        for w in grid.windows(2) {
            assert!(const_ca(w[1]).unwrap() > const_ca(w[0]).unwrap());
        }
        assert!(const_cab_star(3.0, 2.0 + 1e-9).unwrap() > 1e9);
        for &a in &grid {
            for &b in &grid {
                assert!(const_cab_star(a, b).unwrap() > const_cab(a, b).unwrap());
            }
        }
    }

    #[test]
    fn cab_p_branches() {
        assert_eq!(const_cab_p(3.0, 3.0, 1.0).unwrap(), const_cab(3.0, 3.0).unwrap());
        for p in 1..=7 {
            assert_eq!(cab_p_with_branch(3.0, 3.0, p as f64).unwrap().1, CabBranch::Scaled);
        }
        for p in 26..=60 {
            assert_eq!(cab_p_with_branch(3.0, 3.0, p as f64).unwrap().1, CabBranch::Star);
        }
        assert_eq!(cab_p_crossover(3.0, 3.0, 1000).unwrap(), Some(16));
        assert!(cab_p_split_holds(3.0, 3.0, 7, 26).unwrap());
        assert!(cab_p_split_holds(2.4335, 2.1129, 7, 26).unwrap());
        assert!(!cab_p_split_holds(1.01, 1000.0, 7, 26).unwrap());
    }

    #[test]
    fn exp_power_thresholds() {
        let p = exp_power_characteristics(1.0, 0.5, 16).unwrap();
        assert_relative_eq!(p.a_thresh, 2.4334773587754635, max_relative = 1e-12);
        assert!((p.a_thresh - 2.4338).abs() < 5e-4);
        assert_relative_eq!(p.b_thresh, 2.1129099598352243, max_relative = 1e-12);
        assert_eq!(p.n_min, 11);
        assert_relative_eq!(p.eta_gap, 6.0256304583977639, max_relative = 1e-13);
        assert!((p.q123_lower - 5.5452).abs() < 1e-4);
        assert!((p.q123_upper - 9.3888).abs() < 1e-4);
        assert!(p.q123().holds());
        assert!(matches!(exp_power_characteristics(1.0, 1.0, 16), Err(Error::Domain(_))));
    }

    #[test]
    fn closed_gap_matches_bisection() {
        let psi = PsiFunction::exp_power(1.0, 0.5).unwrap();
        for n in [2u64, 9, 16, 100, 1000] {
            let bisected = psi.characteristics(n as f64).unwrap().eta_gap;
            let closed = exp_power_gap(1.0, 0.5, n as f64);
            assert!(((bisected - closed) / closed).abs() <= 1e-10, "n = {n}");
        }
    }

    #[test]
    fn theorem_rows() {
        let psi = PsiFunction::exp_power(1.0, 0.5).unwrap();
        let opts = VerifyOptions::default();
        let row = verify_theorem1(&psi, 0.0, Exponent::INF, 16, &opts);
        assert!(row.pass_lower && row.pass_upper, "{row:?}");
        assert_eq!(row.recomputed_flags(), (true, true));
        let row = verify_theorem1(&psi, 0.0, Exponent::INF, 8, &opts);
        assert!(matches!(row.status, RowStatus::PreconditionViolated(_)));
        assert_eq!(row.proxy, None);

        let t2 = verify_theorem2(&psi, 0.0, Exponent::ONE, 16, &opts);
        assert!(t2.passed());
        let a = verify_theorem1(&psi, 0.0, Exponent::TWO, 16, &opts);
        let b = verify_theorem2(&psi, 0.0, Exponent::TWO, 16, &opts);
        assert_eq!(a.proxy, b.proxy);

        let reqs: Vec<(Mode, Exponent)> = ["1", "2", "4", "inf"]
            .iter()
            .map(|s| (Mode::Theorem1, s.parse().unwrap()))
            .collect();
        let rows = verify_grid(&psi, &[0.0], &[32], &reqs, &opts);
        assert!(rows.iter().all(|r| r.passed()));
        let consts = Constants::new(rows[0].a, rows[0].b).unwrap();
        for r in &rows {
            let ratio = r.proxy.unwrap() / r.x.unwrap();
            assert!(consts.c_a <= ratio && ratio <= consts.c_star_ab);
        }
    }

    #[test]
    fn report_json_has_sixteen_fields() {
        let psi = PsiFunction::exp_power(1.0, 0.5).unwrap();
        let row = verify_theorem1(&psi, 0.0, Exponent::INF, 16, &VerifyOptions::default());
        let v = serde_json::to_value(&row).unwrap();
        let obj = v.as_object().unwrap();
        assert_eq!(obj.len(), 16);
        for key in REPORT_HEADER {
            assert!(obj.contains_key(key), "{key}");
        }
        assert_eq!(obj["p_or_s"], "inf");
        assert_eq!(obj["mode"], "theorem1");

        let bad = verify_theorem1(&psi, 0.0, Exponent::INF, 8, &VerifyOptions::default());
        let v = serde_json::to_value(&bad).unwrap();
        assert!(v["X"].is_null() && v["proxy"].is_null());
        assert_eq!(v["pass_lower"], false);
    }

    #[test]
    fn csv_shapes() {
        let psi = PsiFunction::exp_power(1.0, 0.5).unwrap();
        let row = verify_theorem1(&psi, 0.0, Exponent::INF, 16, &VerifyOptions::default());
        let mut buf = Vec::new();
        write_csv(&mut buf, &[row], &REPORT_HEADER).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), 16);
        assert_eq!(lines[1].split(',').count(), 16);

        let table = corollary_table(1.0, 0.5, 0.0, Mode::Theorem1, Exponent::INF, &[16], &VerifyOptions::default())
            .unwrap();
        let row = &table[0];
        assert!(row.lower.unwrap() <= row.proxy.unwrap() && row.proxy.unwrap() <= row.upper.unwrap());
        let mut buf = Vec::new();
        write_csv(&mut buf, &table, &COROLLARY_HEADER).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().all(|l| l.split(',').count() == 9));
    }

    #[test]
    fn corollary_exponent_bookkeeping() {
        let opts = VerifyOptions::default();
        let t = corollary_table(1.0, 0.5, 0.0, Mode::Theorem1, Exponent::ONE, &[16], &opts).unwrap();
        let c = Constants::new(threshold_a(1.0, 0.5).unwrap(), threshold_b(1.0, 0.5).unwrap()).unwrap();
        let gap = exp_power_gap(1.0, 0.5, 16.0);
        assert_relative_eq!(t[0].lower.unwrap(), c.c_a * (-4f64).exp() * gap, max_relative = 1e-13);
    }

    #[test]
    fn inequality_suite_at_sixteen() {
        let psi = PsiFunction::exp_power(1.0, 0.5).unwrap();
        let r = inequality_suite(&psi, 0.0, 16, 4096, &VerifyOptions::default()).unwrap();
        assert!(r.all_hold(1e-9), "{:?}", r.failures(1e-9));
    }

    #[test]
    fn asymp_scan_small_range() {
        let ns: Vec<u64> = (11..=64).collect();
        let s = asymp_scan(1.0, 0.5, 0.0, Mode::Theorem1, Exponent::INF, &ns, &VerifyOptions::default()).unwrap();
        assert!(s.spread <= 20.0, "{}", s.spread);
        assert!(s.normalized_within_constants());
        assert!(matches!(
            asymp_scan(1.0, 0.5, 0.0, Mode::Theorem1, Exponent::INF, &[5], &VerifyOptions::default()),
            Err(Error::Precondition(_))
        ));
    }
}
