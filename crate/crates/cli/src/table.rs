//! Generator read from a two-column sample table `t psi(t)`.
//!
//! Between nodes `ln psi` is linear in `t`; beyond the last node the last
//! segment is extended. Convexity of the interpolant is not checked: a table
//! sampled from a convex function can still produce a log-linear interpolant
//! whose kinks violate it, and the characteristics then inherit the kinks.

use std::path::Path;

use psiapprox_core::psi::PsiGenerator;
use psiapprox_core::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TablePsi {
    ts: Vec<f64>,
    ln: Vec<f64>,
    label: String,
}

impl TablePsi {
    pub fn new(ts: Vec<f64>, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if ts.len() < 2 || ts.len() != values.len() {
            return Err(Error::InvalidPsi("the table needs at least two (t, psi) rows".into()));
        }
        if ts[0] > 1.0 {
            return Err(Error::InvalidPsi(format!("the table must start at t <= 1, starts at {}", ts[0])));
        }
        for w in ts.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidPsi(format!("t must increase strictly ({} then {})", w[0], w[1])));
            }
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidPsi("psi values must be positive and finite".into()));
        }
        for w in values.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::InvalidPsi(format!("psi must decrease strictly ({} then {})", w[0], w[1])));
            }
        }
        Ok(TablePsi {
            ln: values.iter().map(|v| v.ln()).collect(),
            ts,
            label: label.into(),
        })
    }

    /// Reads whitespace- or comma-separated rows; `#` starts a comment.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Domain(format!("cannot read {}: {e}", path.display())))?;
        let mut ts = Vec::new();
        let mut vs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::InvalidPsi(format!("{}:{}: not a number: {s}", path.display(), i + 1)))
            };
            if cols.len() != 2 {
                return Err(Error::InvalidPsi(format!("{}:{}: expected two columns", path.display(), i + 1)));
            }
            ts.push(parse(cols[0])?);
            vs.push(parse(cols[1])?);
        }
        TablePsi::new(ts, vs, format!("table:{}", path.display()))
    }

    fn segment(&self, t: f64) -> usize {
        let last = self.ts.len() - 2;
        match self.ts.partition_point(|&x| x <= t) {
            0 => 0,
            i => (i - 1).min(last),
        }
    }

    fn slope(&self, i: usize) -> f64 {
        (self.ln[i + 1] - self.ln[i]) / (self.ts[i + 1] - self.ts[i])
    }
}

impl PsiGenerator for TablePsi {
    fn value(&self, t: f64) -> f64 {
        self.ln_value(t).exp()
    }

    fn ln_value(&self, t: f64) -> f64 {
        let i = self.segment(t);
        self.ln[i] + self.slope(i) * (t - self.ts[i])
    }

    fn right_derivative(&self, t: f64) -> Option<f64> {
        Some(self.slope(self.segment(t)) * self.value(t))
    }

    /// Exact for the interpolant: integer nodes up to the last sample, then the
    /// geometric tail of the extended last segment.
    fn tail_bound(&self, k: u64) -> Option<f64> {
        let t_last = *self.ts.last()?;
        let sigma = self.slope(self.ts.len() - 2);
        let start = (k + 1) as f64;
        let first_tail = start.max(t_last.ceil());
        let mut total = 0.0;
        let mut j = start;
        while j < first_tail {
            total += self.value(j);
            j += 1.0;
        }
        Some(total + self.value(first_tail) / -sigma.exp_m1())
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}
