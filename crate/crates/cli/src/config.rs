//! Command-line flags and the validated run configuration built from them.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use psiapprox_core::bounds::{threshold_n, Mode, VerifyOptions};
use psiapprox_core::norms::QuadratureSpec;
use psiapprox_core::{Error, Exponent, PsiFunction, Result};
use serde::{Deserialize, Serialize};

use crate::table::TablePsi;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    ExpPower,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Flags {
    /// Generator family: `exp-power` (exp(-alpha t^r)) or a sampled `table`.
    #[arg(long, global = true, value_enum, default_value = "exp-power")]
    pub family: Family,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub r: Option<f64>,
    /// Two-column `t psi(t)` file for `--family table`.
    #[arg(long, global = true)]
    pub psi_table: Option<PathBuf>,
    /// Shift parameter in units of pi/2.
    #[arg(long, global = true, default_value_t = 0.0, allow_hyphen_values = true)]
    pub beta: f64,
    /// Comma-separated exponents; `inf` allowed.
    #[arg(long, global = true, value_delimiter = ',')]
    pub p: Vec<Exponent>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub s: Vec<Exponent>,
    #[arg(long, global = true)]
    pub n: Option<u64>,
    /// Inclusive range `A:B`.
    #[arg(long, global = true, value_parser = parse_range)]
    pub n_range: Option<(u64, u64)>,
    /// Comma-separated evaluation points.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub t: Vec<f64>,
    #[arg(long, global = true)]
    pub a: Option<f64>,
    #[arg(long, global = true)]
    pub b: Option<f64>,
    /// Absolute truncation budget of the kernel tail.
    #[arg(long, global = true)]
    pub tail_eps: Option<f64>,
    /// Quadrature nodes per wavelength (at least 8).
    #[arg(long, global = true)]
    pub quad_points: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Emit rows below the admissible range instead of refusing.
    #[arg(long, global = true)]
    pub force: bool,
}

fn parse_range(s: &str) -> std::result::Result<(u64, u64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected A:B, got {s}"))?;
    let a: u64 = a.trim().parse().map_err(|_| format!("bad range start {a}"))?;
    let b: u64 = b.trim().parse().map_err(|_| format!("bad range end {b}"))?;
    if a == 0 || b < a {
        return Err(format!("range {s} must satisfy 1 <= A <= B"));
    }
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PsiSpec {
    ExpPower { alpha: f64, r: f64 },
    Table { path: PathBuf },
}

impl PsiSpec {
    pub fn build(&self) -> Result<PsiFunction> {
        match self {
            PsiSpec::ExpPower { alpha, r } => PsiFunction::exp_power(*alpha, *r),
            PsiSpec::Table { path } => Ok(PsiFunction::custom(TablePsi::from_path(path)?)),
        }
    }

    pub fn exp_power(&self) -> Option<(f64, f64)> {
        match *self {
            PsiSpec::ExpPower { alpha, r } => Some((alpha, r)),
            PsiSpec::Table { .. } => None,
        }
    }
}

/// Everything a run needs, validated before any computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub psi: PsiSpec,
    pub beta: f64,
    pub mode: Option<Mode>,
    pub ns: Vec<u64>,
    pub exponents: Vec<Exponent>,
    pub t: Vec<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub tail_eps: Option<f64>,
    pub quad: QuadratureSpec,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
    pub force: bool,
}

impl RunConfig {
    /// `mode` picks which exponent list is read: `--p` for the uniform
    /// metric, `--s` for `L_s`. `default_format` applies without `--format`.
    pub fn from_flags(flags: &Flags, mode: Option<Mode>, default_format: Format) -> Result<Self> {
        let psi = match flags.family {
            Family::ExpPower => {
                let alpha = flags.alpha.ok_or_else(|| Error::Domain("--alpha is required for exp-power".into()))?;
                let r = flags.r.ok_or_else(|| Error::Domain("--r is required for exp-power".into()))?;
                PsiSpec::ExpPower { alpha, r }
            }
            Family::Table => PsiSpec::Table {
                path: flags
                    .psi_table
                    .clone()
                    .ok_or_else(|| Error::Domain("--psi-table is required for the table family".into()))?,
            },
        };
        if flags.n.is_some() && flags.n_range.is_some() {
            return Err(Error::Domain("give either --n or --n-range, not both".into()));
        }
        let ns = match (flags.n, flags.n_range) {
            (Some(n), _) => vec![n],
            (None, Some((a, b))) => (a..=b).collect(),
            (None, None) => Vec::new(),
        };
        if ns.contains(&0) {
            return Err(Error::Domain("n must be at least 1".into()));
        }
        let exponents = match mode {
            Some(Mode::Theorem2) => {
                if !flags.p.is_empty() {
                    return Err(Error::Domain("use --s (not --p) in the L_s mode".into()));
                }
                flags.s.clone()
            }
            _ => {
                if !flags.s.is_empty() {
                    return Err(Error::Domain("use --p (not --s) in the uniform mode".into()));
                }
                flags.p.clone()
            }
        };
        let mut quad = QuadratureSpec::default();
        if let Some(ppw) = flags.quad_points {
            quad = quad.with_points_per_wavelength(ppw);
        }
        quad.validate()?;
        if let Some(eps) = flags.tail_eps {
            if !(eps > 0.0) {
                return Err(Error::Domain(format!("--tail-eps must be positive, got {eps}")));
            }
        }
        if !flags.beta.is_finite() {
            return Err(Error::Domain("--beta must be finite".into()));
        }
        let cfg = RunConfig {
            psi,
            beta: flags.beta,
            mode,
            ns,
            exponents,
            t: flags.t.clone(),
            a: flags.a,
            b: flags.b,
            tail_eps: flags.tail_eps,
            quad,
            out: flags.out.clone(),
            format: flags.format.unwrap_or(default_format),
            seed: flags.seed,
            force: flags.force,
        };
        cfg.psi.build()?;
        Ok(cfg)
    }

    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            a: self.a,
            b: self.b,
            quad: self.quad,
            tail_eps: self.tail_eps,
        }
    }

    pub fn require_ns(&self) -> Result<&[u64]> {
        if self.ns.is_empty() {
            Err(Error::Domain("--n or --n-range is required".into()))
        } else {
            Ok(&self.ns)
        }
    }

    /// Exponents, or `fallback` when none were given.
    pub fn exponents_or(&self, fallback: &[&str]) -> Vec<Exponent> {
        if self.exponents.is_empty() {
            fallback.iter().map(|s| s.parse().expect("valid literal")).collect()
        } else {
            self.exponents.clone()
        }
    }

    /// Refuses `n` below the closed-form threshold of exp-power with `0 < r < 1`.
    pub fn guard_threshold(&self) -> Result<()> {
        if self.force {
            return Ok(());
        }
        if let Some((alpha, r)) = self.psi.exp_power() {
            if r > 0.0 && r < 1.0 && self.a.is_none() && self.b.is_none() {
                let n_min = threshold_n(alpha, r)?;
                if let Some(&bad) = self.ns.iter().find(|&&n| n < n_min) {
                    return Err(Error::Precondition(format!(
                        "n = {bad} is below the admissible threshold n_min = {n_min} for alpha = {alpha}, r = {r}; use --force to emit precondition_violated rows"
                    )));
                }
            }
        }
        Ok(())
    }
}
