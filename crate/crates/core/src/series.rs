//! Finite trigonometric series `a0/2 + sum_{k=1}^N (a_k cos kx + b_k sin kx)`.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::CompensatedSum;

/// Cosine and sine coefficients of a trigonometric polynomial.
///
/// `a[k - 1]` and `b[k - 1]` hold the coefficients of `cos kx` and `sin kx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeries")]
pub struct FourierSeries {
    pub a0: f64,
    a: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSeries {
    a0: f64,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl TryFrom<RawSeries> for FourierSeries {
    type Error = Error;

    fn try_from(raw: RawSeries) -> Result<Self> {
        FourierSeries::new(raw.a0, raw.a, raw.b)
    }
}

impl FourierSeries {
    pub fn new(a0: f64, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Domain(format!(
                "cosine and sine tables differ in length ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        Ok(FourierSeries { a0, a, b })
    }

    pub fn zero(degree: usize) -> Self {
        FourierSeries {
            a0: 0.0,
            a: vec![0.0; degree],
            b: vec![0.0; degree],
        }
    }

    pub fn constant(value: f64) -> Self {
        FourierSeries {
            a0: 2.0 * value,
            a: Vec::new(),
            b: Vec::new(),
        }
    }

    /// `ca cos kx + cb sin kx`.
    pub fn harmonic(k: usize, ca: f64, cb: f64) -> Self {
        let mut s = FourierSeries::zero(k);
        if k == 0 {
            s.a0 = 2.0 * ca;
        } else {
            s.a[k - 1] = ca;
            s.b[k - 1] = cb;
        }
        s
    }

    pub fn degree(&self) -> usize {
        self.a.len()
    }

    pub fn cos_coeffs(&self) -> &[f64] {
        &self.a
    }

    pub fn sin_coeffs(&self) -> &[f64] {
        &self.b
    }

    /// Coefficient pair of `cos kx`, `sin kx` (zero beyond the degree).
    pub fn coeff(&self, k: usize) -> (f64, f64) {
        if k == 0 {
            (self.a0, 0.0)
        } else if k <= self.a.len() {
            (self.a[k - 1], self.b[k - 1])
        } else {
            (0.0, 0.0)
        }
    }

    pub fn set_coeff(&mut self, k: usize, ca: f64, cb: f64) {
        assert!(k >= 1, "use a0 for the constant term");
        if k > self.a.len() {
            self.a.resize(k, 0.0);
            self.b.resize(k, 0.0);
        }
        self.a[k - 1] = ca;
        self.b[k - 1] = cb;
    }

    /// Mean value over a period, `a0/2`.
    pub fn mean(&self) -> f64 {
        0.5 * self.a0
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = CompensatedSum::new();
        acc.add(0.5 * self.a0);
        for (k, (&ak, &bk)) in self.a.iter().zip(&self.b).enumerate() {
            if ak == 0.0 && bk == 0.0 {
                continue;
            }
            let (s, c) = ((k + 1) as f64 * x).sin_cos();
            acc.add(ak * c);
            acc.add(bk * s);
        }
        acc.value()
    }

    /// Truncation to degree `m`.
    pub fn partial_sum(&self, m: usize) -> Self {
        let m = m.min(self.degree());
        FourierSeries {
            a0: self.a0,
            a: self.a[..m].to_vec(),
            b: self.b[..m].to_vec(),
        }
    }

    /// Drops trailing zero harmonics.
    pub fn trimmed(mut self) -> Self {
        while let (Some(&a), Some(&b)) = (self.a.last(), self.b.last()) {
            if a != 0.0 || b != 0.0 {
                break;
            }
            self.a.pop();
            self.b.pop();
        }
        self
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = self.degree().max(other.degree());
        let (a, b) = (1..=n)
            .map(|k| {
                let (x, y) = (self.coeff(k), other.coeff(k));
                (f(x.0, y.0), f(x.1, y.1))
            })
            .unzip();
        FourierSeries {
            a0: f(self.a0, other.a0),
            a,
            b,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |x, y| x + y)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |x, y| x - y)
    }

    pub fn scaled(&self, c: f64) -> Self {
        FourierSeries {
            a0: c * self.a0,
            a: self.a.iter().map(|v| c * v).collect(),
            b: self.b.iter().map(|v| c * v).collect(),
        }
    }

    pub fn derivative(&self) -> Self {
        let (a, b) = self
            .a
            .iter()
            .zip(&self.b)
            .enumerate()
            .map(|(k, (&ak, &bk))| {
                let k = (k + 1) as f64;
                (k * bk, -k * ak)
            })
            .unzip();
        FourierSeries { a0: 0.0, a, b }
    }

    /// Largest absolute coefficient, the constant term counted as `a0/2`.
    pub fn max_abs_coeff(&self) -> f64 {
        self.a
            .iter()
            .chain(&self.b)
            .fold((0.5 * self.a0).abs(), |m, v| m.max(v.abs()))
    }

    /// `||f||_2^2` over `[0, 2pi)` by Parseval.
    pub fn l2_norm_squared(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        acc.add(0.5 * self.a0 * self.a0);
        for (&ak, &bk) in self.a.iter().zip(&self.b) {
            acc.add(ak * ak);
            acc.add(bk * bk);
        }
        std::f64::consts::PI * acc.value()
    }

    /// Values at `t_j = 2 pi j / n`, `j = 0..n`, by one inverse FFT.
    ///
    /// Harmonics above `n/2` are folded onto the grid, so the values are exact
    /// samples for any `n >= 1` (not an interpolation).
    pub fn sample_uniform(&self, n: usize) -> Vec<f64> {
        assert!(n >= 1, "grid must be nonempty");
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[0].re += 0.5 * self.a0;
        for (k, (&ak, &bk)) in self.a.iter().zip(&self.b).enumerate() {
            let idx = (k + 1) % n;
            buf[idx] += Complex64::new(ak, -bk);
        }
        let mut planner = FftPlanner::new();
        planner.plan_fft_inverse(n).process(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }
}

/// Node `t_j = 2 pi j / n` of the uniform grid.
pub fn grid_point(j: usize, n: usize) -> f64 {
    std::f64::consts::TAU * j as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn series(a0: f64, a: &[f64], b: &[f64]) -> FourierSeries {
        FourierSeries::new(a0, a.to_vec(), b.to_vec()).unwrap()
    }

    #[test]
    fn eval_matches_definition() {
        let f = series(1.0, &[2.0, 0.0, -1.0], &[0.5, 3.0, 0.0]);
        let x: f64 = 0.37;
        let direct = 0.5 + 2.0 * x.cos() + 0.5 * x.sin() + 3.0 * (2.0 * x).sin() - (3.0 * x).cos();
        assert_relative_eq!(f.eval(x), direct, max_relative = 1e-14);
    }

    #[test]
    fn partial_sum_edges() {
        let f = series(1.0, &[2.0, 1.0], &[0.5, 3.0]);
        let c = f.partial_sum(0);
        assert_eq!(c.degree(), 0);
        assert_eq!(c.eval(1.3), 0.5);
        assert_eq!(f.partial_sum(5), f);
    }

    #[test]
    fn json_round_trip() {
        let f = series(0.25, &[1.0, -2.0], &[0.0, 0.5]);
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"a0":0.25,"a":[1.0,-2.0],"b":[0.0,0.5]}"#);
        let g: FourierSeries = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        assert!(serde_json::from_str::<FourierSeries>(r#"{"a0":0,"a":[1],"b":[]}"#).is_err());
    }

    #[test]
    fn fft_samples_match_pointwise_evaluation() {
        let f = series(0.3, &[1.0, 0.0, -0.5, 0.25, 0.1], &[0.0, 2.0, 0.5, 0.0, -0.3]);
        for n in [3usize, 8, 17, 64] {
            let s = f.sample_uniform(n);
            for (j, v) in s.iter().enumerate() {
                assert!((v - f.eval(grid_point(j, n))).abs() < 1e-13, "n = {n}, j = {j}");
            }
        }
    }

    #[test]
    fn parseval() {
        let f = series(0.0, &[1.0], &[0.0]);
        assert_relative_eq!(f.l2_norm_squared().sqrt(), PI.sqrt(), max_relative = 1e-15);
        let c = FourierSeries::constant(1.0);
        assert_relative_eq!(c.l2_norm_squared(), 2.0 * PI, max_relative = 1e-15);
    }

    #[test]
    fn derivative_of_harmonic() {
        let f = FourierSeries::harmonic(3, 1.0, 2.0);
        let d = f.derivative();
        let x: f64 = 0.8;
        let direct = -3.0 * (3.0 * x).sin() + 6.0 * (3.0 * x).cos();
        assert_relative_eq!(d.eval(x), direct, max_relative = 1e-14);
    }

    fn coeffs(len: usize) -> impl Strategy<Value = FourierSeries> {
        (
            -1.0..1.0f64,
            prop::collection::vec(-1.0..1.0f64, len),
            prop::collection::vec(-1.0..1.0f64, len),
        )
            .prop_map(|(a0, a, b)| FourierSeries::new(a0, a, b).unwrap())
    }

    proptest! {
        #[test]
        fn partial_sum_is_linear(f in coeffs(12), g in coeffs(7), m in 0usize..15) {
            let lhs = f.add(&g).partial_sum(m);
            let rhs = f.partial_sum(m).add(&g.partial_sum(m));
            for k in 0..=m.max(12) {
                let (x, y) = (lhs.coeff(k), rhs.coeff(k));
                prop_assert!((x.0 - y.0).abs() < 1e-15 && (x.1 - y.1).abs() < 1e-15);
            }
        }

        #[test]
        fn eval_is_linear(f in coeffs(9), g in coeffs(9), c in -3.0..3.0f64, x in -4.0..4.0f64) {
            let lhs = f.add(&g.scaled(c)).eval(x);
            let rhs = f.eval(x) + c * g.eval(x);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
