//! Dirichlet-type kernels `D_{k,beta}` and the residual kernel `Psi*_{beta,n}`.
//!
//! With `theta = beta pi / 2` and `G = [eta(n)] - n`,
//!
//! ```text
//! Psi*(t) = psi(n) sum_{k=n-G+1}^{n-1} (1 - (n-k)/G) cos(kt - theta)
//!         + sum_{k>=n} psi(k) cos(kt - theta).
//! ```
//!
//! The infinite tail is cut at a truncation index `K` whose remainder is
//! certified to be below `tail_eps`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::psi::PsiFunction;
use crate::series::FourierSeries;
use crate::sum::{compensated, CompensatedSum};

/// Below this `|t|` the Dirichlet kernel is summed directly.
pub const T_SWITCH: f64 = 1e-4;

/// Default tail budget relative to the bound scale `psi(n)(eta(n) - n)`.
pub const DEFAULT_TAIL_REL: f64 = 1e-15;

/// Relative slack when comparing a tail bound with its budget.
const TAIL_SLACK: f64 = 1e-12;

const MAX_TRUNCATION: u64 = 1 << 32;

/// `(cos theta, sin theta)` for `theta = beta pi / 2`, exact for integer `beta`.
pub fn phase(beta: f64) -> (f64, f64) {
    if beta.fract() == 0.0 && beta.abs() < 9.0e15 {
        match beta.rem_euclid(4.0) as u8 {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let (s, c) = (beta * std::f64::consts::FRAC_PI_2).sin_cos();
        (c, s)
    }
}

/// Reduces `t` to `(-pi, pi]`.
pub fn reduce_angle(t: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = t - tau * (t / tau).round();
    if r <= -std::f64::consts::PI {
        r + tau
    } else {
        r
    }
}

/// `D_{k,beta}(t) = cos(theta)/2 + sum_{j=1}^k cos(jt - theta)`.
pub fn dirichlet(k: u64, beta: f64, t: f64) -> f64 {
    let t = reduce_angle(t);
    if t.abs() < T_SWITCH {
        dirichlet_direct(k, beta, t)
    } else {
        dirichlet_closed(k, beta, t)
    }
}

/// Closed form of `D_{k,beta}`, written without the cancellation of the textbook
/// numerator `sin((k+1/2)t - theta) + cos(t/2) sin(theta)` near `t = 0`.
pub fn dirichlet_closed(k: u64, beta: f64, t: f64) -> f64 {
    let (c, s) = phase(beta);
    let k = k as f64;
    let cos_part = ((k + 0.5) * t).sin() * c;
    let sin_part = if s == 0.0 {
        0.0
    } else {
        2.0 * s * (0.5 * (k + 1.0) * t).sin() * (0.5 * k * t).sin()
    };
    (cos_part + sin_part) / (2.0 * (0.5 * t).sin())
}

/// Defining sum of `D_{k,beta}`, compensated.
pub fn dirichlet_direct(k: u64, beta: f64, t: f64) -> f64 {
    let (c, s) = phase(beta);
    let mut acc = CompensatedSum::new();
    acc.add(0.5 * c);
    for j in 1..=k {
        let (sj, cj) = (j as f64 * t).sin_cos();
        acc.add(cj * c);
        acc.add(sj * s);
    }
    acc.value()
}

/// `sum_{j=0}^k sin((j + 1/2)t - theta)`.
pub fn sine_partial_sum(k: u64, beta: f64, t: f64) -> f64 {
    let (c, s) = phase(beta);
    compensated((0..=k).flat_map(|j| {
        let (sj, cj) = ((j as f64 + 0.5) * t).sin_cos();
        [sj * c, -cj * s]
    }))
}

fn tail_bound_at(psi: &PsiFunction, k: u64) -> Result<Option<f64>> {
    if let Some(b) = psi.tail_bound(k) {
        return Ok(Some(b));
    }
    match psi {
        // The certified gamma bound is not yet valid this early.
        PsiFunction::ExpPower { .. } => Ok(None),
        PsiFunction::Custom(_) => {
            let l1 = psi.ln_at(k as f64 + 1.0);
            let l2 = psi.ln_at(k as f64 + 2.0);
            let rho = (l2 - l1).exp();
            if !(rho < 1.0) {
                return Err(Error::InvalidPsi(format!(
                    "psi({})/psi({}) = {rho} is not below 1",
                    k + 2,
                    k + 1
                )));
            }
            Ok(Some(l1.exp() / (1.0 - rho)))
        }
    }
}

/// Smallest `K >= n` whose certified tail `sum_{k>K} psi(k)` is at most `tail_eps`.
///
/// Exp-power generators with `r < 1` use the incomplete-gamma bound (their
/// ratio `psi(k+1)/psi(k)` increases, so a geometric extrapolation would
/// under-estimate the tail); `r >= 1` and custom generators without their own
/// bound use `psi(K+1)/(1 - rho)` with `rho = psi(K+2)/psi(K+1)`.
pub fn truncation_index(psi: &PsiFunction, n: u64, tail_eps: f64) -> Result<u64> {
    if !(tail_eps > 0.0) {
        return Err(Error::Domain(format!("tail_eps must be positive, got {tail_eps}")));
    }
    let ok = |k: u64| -> Result<bool> {
        Ok(matches!(tail_bound_at(psi, k)?, Some(b) if b <= tail_eps * (1.0 + TAIL_SLACK)))
    };
    if ok(n)? {
        return Ok(n);
    }
    let mut lo = n;
    let mut step = 1u64;
    let mut hi = n + step;
    while !ok(hi)? {
        lo = hi;
        step *= 2;
        hi = n + step;
        if hi > MAX_TRUNCATION {
            return Err(Error::NonConvergence(format!(
                "tail of psi did not fall below {tail_eps:e} before k = {MAX_TRUNCATION}"
            )));
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Pointwise evaluator of `Psi*_{beta,n}` with a certified truncation.
#[derive(Debug, Clone)]
pub struct KernelEvaluator {
    psi: PsiFunction,
    beta: f64,
    n: u64,
    tail_eps: f64,
    truncation: u64,
    eta: f64,
    eta_floor: i64,
    gap: u64,
    psi_n: f64,
    /// `c_k` for `k = 0..=K`; zero below the taper.
    coeffs: Vec<f64>,
    series: FourierSeries,
}

impl KernelEvaluator {
    /// Evaluator with the default budget `tail_eps = 1e-15 psi(n)(eta(n) - n)`.
    pub fn new(psi: &PsiFunction, beta: f64, n: u64) -> Result<Self> {
        Self::build(psi, beta, n, None)
    }

    pub fn with_tail_eps(psi: &PsiFunction, beta: f64, n: u64, tail_eps: f64) -> Result<Self> {
        Self::build(psi, beta, n, Some(tail_eps))
    }

    fn build(psi: &PsiFunction, beta: f64, n: u64, tail_eps: Option<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("n must be at least 2, got {n}")));
        }
        if !beta.is_finite() {
            return Err(Error::Domain(format!("beta must be finite, got {beta}")));
        }
        let nf = n as f64;
        let eta = psi.eta(nf)?;
        let eta_floor = psi.eta_floor(nf)?;
        let gap = eta_floor - n as i64;
        if gap <= 0 {
            return Err(Error::DegenerateGap { n });
        }
        if eta_floor > 2 * n as i64 {
            return Err(Error::Precondition(format!(
                "[eta({n})] = {eta_floor} exceeds 2n; the taper would start below k = 0"
            )));
        }
        let gap = gap as u64;
        let psi_n = psi.value_at(nf);
        let tail_eps = tail_eps.unwrap_or(DEFAULT_TAIL_REL * psi_n * (eta - nf));
        let truncation = truncation_index(psi, n, tail_eps)?;

        let mut coeffs = vec![0.0; truncation as usize + 1];
        for k in (n - gap + 1)..n {
            coeffs[k as usize] = psi_n * (gap + k - n) as f64 / gap as f64;
        }
        for k in n..=truncation {
            coeffs[k as usize] = psi.value_at(k as f64);
        }
        let (c, s) = phase(beta);
        let series = FourierSeries::new(
            0.0,
            coeffs[1..].iter().map(|v| v * c).collect(),
            coeffs[1..].iter().map(|v| v * s).collect(),
        )?;
        Ok(KernelEvaluator {
            psi: psi.clone(),
            beta,
            n,
            tail_eps,
            truncation,
            eta,
            eta_floor,
            gap,
            psi_n,
            coeffs,
            series,
        })
    }

    pub fn psi(&self) -> &PsiFunction {
        &self.psi
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn tail_eps(&self) -> f64 {
        self.tail_eps
    }

    /// `K`.
    pub fn truncation_index(&self) -> u64 {
        self.truncation
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn eta_floor(&self) -> i64 {
        self.eta_floor
    }

    /// `eta(n) - n`.
    pub fn eta_gap(&self) -> f64 {
        self.eta - self.n as f64
    }

    /// `[eta(n)] - n`.
    pub fn floor_gap(&self) -> u64 {
        self.gap
    }

    pub fn mu(&self) -> f64 {
        self.n as f64 / self.eta_gap()
    }

    pub fn psi_n(&self) -> f64 {
        self.psi_n
    }

    /// `c_k`, the amplitude of `cos(kt - theta)`.
    pub fn coefficient(&self, k: u64) -> f64 {
        self.coeffs.get(k as usize).copied().unwrap_or(0.0)
    }

    /// `Psi*` as a trigonometric polynomial of degree `K`.
    pub fn series(&self) -> &FourierSeries {
        &self.series
    }

    /// `sum_{k=n}^K psi(k) cos(kt - theta)` as a trigonometric polynomial.
    pub fn tail_series(&self) -> FourierSeries {
        let (c, s) = phase(self.beta);
        let a = (1..=self.truncation)
            .map(|k| if k >= self.n { self.coefficient(k) * c } else { 0.0 })
            .collect();
        let b = (1..=self.truncation)
            .map(|k| if k >= self.n { self.coefficient(k) * s } else { 0.0 })
            .collect();
        FourierSeries::new(0.0, a, b).expect("equal lengths")
    }

    /// `Psi*(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        self.series.eval(t)
    }

    pub fn tail_eval(&self, t: f64) -> f64 {
        let (c, s) = phase(self.beta);
        compensated((self.n..=self.truncation).flat_map(|k| {
            let (sk, ck) = (k as f64 * t).sin_cos();
            let v = self.coefficient(k);
            [v * ck * c, v * sk * s]
        }))
    }

    /// `Psi*(t)` in three algebraically equivalent forms:
    /// the defining sum, the Dirichlet form
    /// `psi(n) D_{n-1} - psi(n)/G sum_{k=n-G}^{n-1} D_k + tail`, and the Abel
    /// form `sum_{k=n}^K Delta psi(k) D_k - psi(n)/G sum_{k=n-G}^{n-1} D_k`,
    /// where `Delta psi(K) = psi(K)` for the truncated sequence.
    pub fn representations(&self, t: f64) -> [f64; 3] {
        let (c, s) = phase(self.beta);
        let kmax = self.truncation as usize;
        let n = self.n as usize;
        let g = self.gap as usize;
        let table: Vec<f64> = (0..=kmax)
            .map(|k| {
                let (sk, ck) = (k as f64 * t).sin_cos();
                ck * c + sk * s
            })
            .collect();
        let mut dk = Vec::with_capacity(kmax + 1);
        let mut acc = CompensatedSum::new();
        acc.add(0.5 * c);
        dk.push(acc.value());
        for v in &table[1..] {
            acc.add(*v);
            dk.push(acc.value());
        }

        let direct = compensated((1..=kmax).map(|k| self.coeffs[k] * table[k]));
        let tail = compensated((n..=kmax).map(|k| self.coeffs[k] * table[k]));
        let ramp = self.psi_n / g as f64 * compensated((n - g..n).map(|k| dk[k]));
        let dirichlet_form = compensated([self.psi_n * dk[n - 1], -ramp, tail]);
        let abel = compensated((n..=kmax).map(|k| {
            let next = if k < kmax { self.coeffs[k + 1] } else { 0.0 };
            (self.coeffs[k] - next) * dk[k]
        }));
        let abel_form = abel - ramp;
        [direct, dirichlet_form, abel_form]
    }

    /// Samples `Psi*(2 pi j / m)`, `j = 0..m`.
    pub fn sample_uniform(&self, m: usize) -> Vec<f64> {
        self.series.sample_uniform(m)
    }
}

/// Maximum of `|LHS - RHS|` of the summation identity
///
/// ```text
/// 1/(M-N) sum_{k=N}^{M-1} sum_{j=1}^k lambda(j) cos(jt + gamma)
///   = sum_{k=1}^N lambda(k) cos(kt + gamma)
///     + 1/(M-N) sum_{k=N+1}^{M-1} (M-k) lambda(k) cos(kt + gamma)
/// ```
///
/// over `t_grid`, with `lambda[j - 1] = lambda(j)`.
pub fn lemma1_check(lambda: &[f64], gamma: f64, n: usize, m: usize, t_grid: &[f64]) -> Result<f64> {
    if n >= m {
        return Err(Error::Domain(format!("need N < M, got N = {n}, M = {m}")));
    }
    if lambda.len() + 1 < m {
        return Err(Error::Domain(format!(
            "lambda must cover 1..M-1 = 1..{}, got {} values",
            m - 1,
            lambda.len()
        )));
    }
    let width = (m - n) as f64;
    let worst = t_grid
        .iter()
        .map(|&t| {
            let terms: Vec<f64> = (1..m)
                .map(|j| lambda[j - 1] * (j as f64 * t + gamma).cos())
                .collect();
            // prefix holds P_k = sum_{j<=k} after the k-th term
            let mut prefix = CompensatedSum::new();
            let mut lhs = CompensatedSum::new();
            for (k, term) in terms.iter().enumerate().map(|(i, v)| (i + 1, *v)) {
                prefix.add(term);
                if k >= n {
                    lhs.add(prefix.value());
                }
            }
            let lhs = lhs.value() / width;
            let mut rhs = CompensatedSum::new();
            for (k, term) in terms.iter().enumerate().map(|(i, v)| (i + 1, *v)) {
                if k <= n {
                    rhs.add(term);
                } else {
                    rhs.add((m - k) as f64 * term / width);
                }
            }
            (lhs - rhs.value()).abs()
        })
        .fold(0.0, f64::max);
    Ok(worst)
}

/// Outcome of a pointwise bound scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    PreconditionViolated,
}

/// Worst case of `|value(t)| <= bound(t)` over a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundScan {
    pub points: usize,
    pub violations: usize,
    /// `max |value| / bound`.
    pub worst_ratio: f64,
    pub worst_t: f64,
    /// `min (bound - |value|)`.
    pub min_margin: f64,
}

impl Default for BoundScan {
    fn default() -> Self {
        BoundScan {
            points: 0,
            violations: 0,
            worst_ratio: 0.0,
            worst_t: f64::NAN,
            min_margin: f64::INFINITY,
        }
    }
}

impl BoundScan {
    fn record(&mut self, t: f64, value: f64, bound: f64, tol: f64) {
        self.points += 1;
        let ratio = value.abs() / bound;
        if ratio > self.worst_ratio || self.worst_t.is_nan() {
            self.worst_ratio = ratio;
            self.worst_t = t;
        }
        self.min_margin = self.min_margin.min(bound - value.abs());
        if value.abs() > bound + tol {
            self.violations += 1;
        }
    }
}

/// Envelopes `|Psi*(t)| <= pi^2 (2(b+1)^2/b^2 + a/(a-1)) psi(n) / ((eta(n)-n) t^2)`
/// for `0 < |t| <= pi` and `|Psi*(t)| <= (2b/(b-2) + 1/a + 1/2) psi(n)(eta(n)-n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub status: CheckStatus,
    pub message: Option<String>,
    pub decay: BoundScan,
    pub uniform: BoundScan,
    pub tolerance: f64,
}

/// Tail bound `|sum_{k=n}^K psi(k) cos(kt - theta)| <= (2b/(b-2) + 1/a) psi(n)(eta(n)-n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub status: CheckStatus,
    pub message: Option<String>,
    pub scan: BoundScan,
    pub tolerance: f64,
}

fn gap_preconditions(ke: &KernelEvaluator, a: f64, a_min: f64, b: f64) -> Option<String> {
    if !(a > a_min) {
        return Some(format!("a = {a} must exceed {a_min}"));
    }
    if !(b > 2.0) {
        return Some(format!("b = {b} must exceed 2"));
    }
    if ke.eta_gap() < a {
        return Some(format!("eta(n) - n = {} is below a = {a}", ke.eta_gap()));
    }
    if ke.mu() < b {
        return Some(format!("mu(n) = {} is below b = {b}", ke.mu()));
    }
    None
}

/// Right-hand side of the decay envelope at `t != 0`.
pub fn decay_envelope(ke: &KernelEvaluator, a: f64, b: f64, t: f64) -> f64 {
    let q = (b + 1.0) / b;
    let pi2 = std::f64::consts::PI.powi(2);
    pi2 * (2.0 * q * q + a / (a - 1.0)) * ke.psi_n() / (ke.eta_gap() * t * t)
}

/// Right-hand side of the uniform envelope.
pub fn uniform_envelope(ke: &KernelEvaluator, a: f64, b: f64) -> f64 {
    (2.0 * b / (b - 2.0) + 1.0 / a + 0.5) * ke.psi_n() * ke.eta_gap()
}

/// Right-hand side of the tail bound.
pub fn tail_envelope(ke: &KernelEvaluator, a: f64, b: f64) -> f64 {
    (2.0 * b / (b - 2.0) + 1.0 / a) * ke.psi_n() * ke.eta_gap()
}

fn scan_envelopes(ke: &KernelEvaluator, a: f64, b: f64, points: &[(f64, f64)]) -> EnvelopeReport {
    let tol = 10.0 * ke.tail_eps();
    if let Some(msg) = gap_preconditions(ke, a, 1.0, b) {
        return EnvelopeReport {
            status: CheckStatus::PreconditionViolated,
            message: Some(msg),
            decay: BoundScan::default(),
            uniform: BoundScan::default(),
            tolerance: tol,
        };
    }
    let ubound = uniform_envelope(ke, a, b);
    let mut decay = BoundScan::default();
    let mut uniform = BoundScan::default();
    for &(t, v) in points {
        uniform.record(t, v, ubound, tol);
        let tr = reduce_angle(t);
        if tr != 0.0 {
            decay.record(t, v, decay_envelope(ke, a, b, tr), tol);
        }
    }
    let status = if decay.violations + uniform.violations == 0 {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    EnvelopeReport {
        status,
        message: None,
        decay,
        uniform,
        tolerance: tol,
    }
}

/// Envelope check at arbitrary points (evaluated directly, in parallel).
pub fn envelope_check(ke: &KernelEvaluator, a: f64, b: f64, t_grid: &[f64]) -> EnvelopeReport {
    let points: Vec<(f64, f64)> = t_grid.par_iter().map(|&t| (t, ke.eval(t))).collect();
    scan_envelopes(ke, a, b, &points)
}

/// Envelope check on the uniform grid `2 pi j / m` (sampled by FFT).
pub fn envelope_check_uniform(ke: &KernelEvaluator, a: f64, b: f64, m: usize) -> EnvelopeReport {
    let points: Vec<(f64, f64)> = ke
        .sample_uniform(m)
        .into_iter()
        .enumerate()
        .map(|(j, v)| (crate::series::grid_point(j, m), v))
        .collect();
    scan_envelopes(ke, a, b, &points)
}

fn scan_tail(ke: &KernelEvaluator, a: f64, b: f64, points: &[(f64, f64)]) -> TailReport {
    let tol = ke.tail_eps();
    if let Some(msg) = gap_preconditions(ke, a, 0.0, b) {
        return TailReport {
            status: CheckStatus::PreconditionViolated,
            message: Some(msg),
            scan: BoundScan::default(),
            tolerance: tol,
        };
    }
    let bound = tail_envelope(ke, a, b);
    let mut scan = BoundScan::default();
    for &(t, v) in points {
        scan.record(t, v, bound, tol);
    }
    TailReport {
        status: if scan.violations == 0 {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        message: None,
        scan,
        tolerance: tol,
    }
}

pub fn tail_sum_bound_check(ke: &KernelEvaluator, a: f64, b: f64, t_grid: &[f64]) -> TailReport {
    let points: Vec<(f64, f64)> = t_grid.par_iter().map(|&t| (t, ke.tail_eval(t))).collect();
    scan_tail(ke, a, b, &points)
}

pub fn tail_sum_bound_check_uniform(ke: &KernelEvaluator, a: f64, b: f64, m: usize) -> TailReport {
    let points: Vec<(f64, f64)> = ke
        .tail_series()
        .sample_uniform(m)
        .into_iter()
        .enumerate()
        .map(|(j, v)| (crate::series::grid_point(j, m), v))
        .collect();
    scan_tail(ke, a, b, &points)
}
