mod config;
mod table;

use std::f64::consts::{PI, TAU};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;
use std::path::Path;

use clap::{Parser, Subcommand};
use psiapprox_core::bounds::{
    self, asymp_scan, corollary_table, inequality_suite, verify_grid, BoundReport, Mode, Summary,
    COROLLARY_HEADER, REPORT_HEADER,
};
use psiapprox_core::kernels::{lemma1_check, KernelEvaluator};
use psiapprox_core::method::TaperCoefficients;
use psiapprox_core::norms::NormCache;
use psiapprox_core::{Error, Exponent, PsiFunction, Result};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use config::{Flags, Format, RunConfig};

const LEMMA1_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "psiapprox", version, about = "Approximation of psi-integral classes: characteristics, kernels and bound checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// t, psi(t), eta(t), eta(t) - t, mu(t), [eta(t)] - t.
    Characteristics,
    /// Taper coefficients lambda(k), k = 0..n-1.
    Lambda,
    /// Kernel values at --t (default: 16 uniform points).
    KernelEval,
    /// L_p norms of the kernel for each --p.
    KernelNorm,
    /// Check theorems, lemmas and envelopes; exit code reflects the rows.
    #[command(subcommand)]
    Verify(Check),
    /// Closed-form corollary bounds next to the kernel proxy (exp-power only).
    Table,
    /// proxy / (exp(-alpha n^r) n^{(1-r)e}) over --n-range.
    Asymp,
}

#[derive(Subcommand, Clone, Copy)]
enum Check {
    /// Uniform metric: C_a X <= (1/pi)||Psi*||_{p'} <= C*_{a,b} X.
    Theorem1,
    /// L_s metric: C_a X <= (1/pi)||Psi*||_s <= C*_{a,b} X.
    Theorem2,
    /// Summation identity on 100 seeded random instances.
    Lemma1,
    /// Lemma 2 sandwich at each n (or --t).
    Lemma2,
    /// Kernel envelopes, tail bound and characteristic inequalities at each n.
    Envelopes,
}

/// Row-level outcome of a command.
#[derive(Default)]
struct Outcome {
    summary: Option<Summary>,
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::NonConvergence(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("PSIAPPROX_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: cannot size the thread pool: {e}");
                    return ExitCode::from(2);
                }
            }
            _ => {
                eprintln!("error: PSIAPPROX_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    match run(&cli) {
        Ok(outcome) => match outcome.summary {
            Some(s) => {
                eprintln!(
                    "summary: total={} passed={} failed={} precondition_violated={} errored={}",
                    s.total, s.passed, s.failed, s.precondition_violated, s.errored
                );
                ExitCode::from(if s.errored > 0 {
                    3
                } else if s.failed > 0 {
                    1
                } else if s.precondition_violated > 0 {
                    2
                } else {
                    0
                })
            }
            None => ExitCode::SUCCESS,
        },
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    let flags = &cli.flags;
    match cli.command {
        Command::Characteristics => characteristics(&RunConfig::from_flags(flags, None, Format::Json)?),
        Command::Lambda => lambda(&RunConfig::from_flags(flags, None, Format::Json)?),
        Command::KernelEval => kernel_eval(&RunConfig::from_flags(flags, None, Format::Json)?),
        Command::KernelNorm => kernel_norm(&RunConfig::from_flags(flags, Some(Mode::Theorem1), Format::Json)?),
        Command::Verify(Check::Theorem1) => theorem(&RunConfig::from_flags(flags, Some(Mode::Theorem1), Format::Json)?),
        Command::Verify(Check::Theorem2) => theorem(&RunConfig::from_flags(flags, Some(Mode::Theorem2), Format::Json)?),
        Command::Verify(Check::Lemma1) => lemma1(flags),
        Command::Verify(Check::Lemma2) => lemma2(&RunConfig::from_flags(flags, None, Format::Json)?),
        Command::Verify(Check::Envelopes) => envelopes(&RunConfig::from_flags(flags, None, Format::Json)?),
        Command::Table => table(&RunConfig::from_flags(flags, metric_mode(flags), Format::Csv)?),
        Command::Asymp => asymp(&RunConfig::from_flags(flags, metric_mode(flags), Format::Json)?),
    }
}

/// `--s` selects the `L_s` metric, otherwise the uniform one.
fn metric_mode(flags: &Flags) -> Option<Mode> {
    Some(if flags.s.is_empty() { Mode::Theorem1 } else { Mode::Theorem2 })
}

fn emit<T: Serialize>(cfg: &RunConfig, rows: &[T], header: &[&str]) -> Result<()> {
    emit_to(cfg.out.as_deref(), cfg.format, rows, header)
}

fn emit_to<T: Serialize>(out: Option<&Path>, format: Format, rows: &[T], header: &[&str]) -> Result<()> {
    let io_err = |e: io::Error| Error::Domain(format!("cannot write output: {e}"));
    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(File::create(path).map_err(io_err)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut sink = BufWriter::new(sink);
    match format {
        Format::Json => bounds::write_json(&mut sink, rows)?,
        Format::Csv => bounds::write_csv(&mut sink, rows, header)?,
    }
    sink.flush().map_err(io_err)
}

fn points(cfg: &RunConfig) -> Result<Vec<f64>> {
    if !cfg.t.is_empty() {
        Ok(cfg.t.clone())
    } else {
        Ok(cfg.require_ns()?.iter().map(|&n| n as f64).collect())
    }
}

#[derive(Serialize)]
struct CharacteristicsRow {
    t: f64,
    psi: f64,
    eta: f64,
    eta_gap: f64,
    mu: f64,
    floor_gap: Option<i64>,
}

fn characteristics(cfg: &RunConfig) -> Result<Outcome> {
    let psi = cfg.psi.build()?;
    let rows = points(cfg)?
        .into_iter()
        .map(|t| {
            let p = psi.characteristics(t)?;
            Ok(CharacteristicsRow {
                t,
                psi: psi.eval(t)?,
                eta: p.eta,
                eta_gap: p.eta_gap,
                mu: p.mu,
                floor_gap: p.floor_gap,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    emit(cfg, &rows, &["t", "psi", "eta", "eta_gap", "mu", "floor_gap"])?;
    Ok(Outcome::default())
}

#[derive(Serialize)]
struct LambdaRow {
    n: u64,
    k: usize,
    lambda: f64,
}

fn lambda(cfg: &RunConfig) -> Result<Outcome> {
    let psi = cfg.psi.build()?;
    let mut rows = Vec::new();
    for &n in cfg.require_ns()? {
        let tc = TaperCoefficients::new(&psi, n)?;
        rows.extend((0..n as usize).map(|k| LambdaRow { n, k, lambda: tc.lambda(k) }));
    }
    emit(cfg, &rows, &["n", "k", "lambda"])?;
    Ok(Outcome::default())
}

fn kernel(cfg: &RunConfig, psi: &PsiFunction, n: u64) -> Result<KernelEvaluator> {
    match cfg.tail_eps {
        Some(eps) => KernelEvaluator::with_tail_eps(psi, cfg.beta, n, eps),
        None => KernelEvaluator::new(psi, cfg.beta, n),
    }
}

#[derive(Serialize)]
struct KernelRow {
    n: u64,
    beta: f64,
    t: f64,
    value: f64,
    truncation: u64,
}

fn kernel_eval(cfg: &RunConfig) -> Result<Outcome> {
    let psi = cfg.psi.build()?;
    let ts: Vec<f64> = if cfg.t.is_empty() {
        (0..16).map(|j| TAU * j as f64 / 16.0).collect()
    } else {
        cfg.t.clone()
    };
    let mut rows = Vec::new();
    for &n in cfg.require_ns()? {
        let ke = kernel(cfg, &psi, n)?;
        rows.extend(ts.iter().map(|&t| KernelRow {
            n,
            beta: cfg.beta,
            t,
            value: ke.eval(t),
            truncation: ke.truncation_index(),
        }));
    }
    emit(cfg, &rows, &["n", "beta", "t", "value", "truncation"])?;
    Ok(Outcome::default())
}

#[derive(Serialize)]
struct NormRow {
    n: u64,
    beta: f64,
    p: Exponent,
    norm: f64,
    error: f64,
    nodes: usize,
}

fn kernel_norm(cfg: &RunConfig) -> Result<Outcome> {
    let psi = cfg.psi.build()?;
    let ps = cfg.exponents_or(&["1", "2", "inf"]);
    let rows: Vec<Vec<NormRow>> = cfg
        .require_ns()?
        .par_iter()
        .map(|&n| {
            let ke = kernel(cfg, &psi, n)?;
            let mut cache = NormCache::new(ke.series());
            ps.iter()
                .map(|&p| {
                    let est = cache.lp(p, &cfg.quad)?;
                    Ok(NormRow {
                        n,
                        beta: cfg.beta,
                        p,
                        norm: est.value,
                        error: est.error,
                        nodes: est.nodes,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<NormRow> = rows.into_iter().flatten().collect();
    emit(cfg, &rows, &["n", "beta", "p", "norm", "error", "nodes"])?;
    Ok(Outcome::default())
}

fn theorem(cfg: &RunConfig) -> Result<Outcome> {
    let mode = cfg.mode.expect("theorem commands carry a mode");
    let ns = cfg.require_ns()?;
    cfg.guard_threshold()?;
    let psi = cfg.psi.build()?;
    let requests: Vec<(Mode, Exponent)> = cfg
        .exponents_or(&["1", "2", "4", "inf"])
        .into_iter()
        .map(|p| (mode, p))
        .collect();
    let rows: Vec<BoundReport> = verify_grid(&psi, &[cfg.beta], ns, &requests, &cfg.verify_options());
    if !cfg.force {
        if let Some(row) = rows.iter().find(|r| matches!(r.status, bounds::RowStatus::PreconditionViolated(_))) {
            if let bounds::RowStatus::PreconditionViolated(msg) = &row.status {
                return Err(Error::Precondition(format!(
                    "n = {}: {msg}; use --force to emit precondition_violated rows",
                    row.n
                )));
            }
        }
    }
    emit(cfg, &rows, &REPORT_HEADER)?;
    Ok(Outcome {
        summary: Some(Summary::of(&rows)),
    })
}

#[derive(Serialize)]
struct Lemma1Row {
    instance: usize,
    n: usize,
    m: usize,
    gamma: f64,
    discrepancy: f64,
    pass: bool,
}

/// Needs no generator: only `--seed`, `--out` and `--format` are read.
fn lemma1(flags: &Flags) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(flags.seed);
    let grid: Vec<f64> = (0..1000).map(|j| TAU * j as f64 / 1000.0 - PI).collect();
    let mut rows = Vec::with_capacity(100);
    for instance in 0..100 {
        let m = rng.random_range(2..=50usize);
        let n = rng.random_range(1..m);
        let lambda: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gamma = rng.random_range(-PI..PI);
        let discrepancy = lemma1_check(&lambda, gamma, n, m, &grid)?;
        rows.push(Lemma1Row {
            instance,
            n,
            m,
            gamma,
            discrepancy,
            pass: discrepancy <= LEMMA1_TOL,
        });
    }
    let format = flags.format.unwrap_or(Format::Json);
    emit_to(flags.out.as_deref(), format, &rows, &["instance", "n", "m", "gamma", "discrepancy", "pass"])?;
    Ok(Outcome {
        summary: Some(pass_summary(rows.iter().map(|r| r.pass))),
    })
}

fn pass_summary(flags: impl Iterator<Item = bool>) -> Summary {
    let mut s = Summary::default();
    for ok in flags {
        s.total += 1;
        if ok {
            s.passed += 1;
        } else {
            s.failed += 1;
        }
    }
    s
}

#[derive(Serialize)]
struct Lemma2Row {
    t: f64,
    b: f64,
    lower: f64,
    value: f64,
    upper: f64,
    pass: bool,
}

/// `--b`, else `b(alpha, r)` for exp-power with `0 < r < 1`.
fn lemma_b(cfg: &RunConfig) -> Result<f64> {
    if let Some(b) = cfg.b {
        return Ok(b);
    }
    match cfg.psi.exp_power() {
        Some((alpha, r)) if r > 0.0 && r < 1.0 => bounds::threshold_b(alpha, r),
        _ => Err(Error::Domain("--b is required for this generator".into())),
    }
}

fn lemma2(cfg: &RunConfig) -> Result<Outcome> {
    let psi = cfg.psi.build()?;
    let b = lemma_b(cfg)?;
    let rows = points(cfg)?
        .into_iter()
        .map(|t| {
            let s = psi.lemma2_margins(t, b)?;
            Ok(Lemma2Row {
                t,
                b,
                lower: s.lower,
                value: s.value,
                upper: s.upper,
                pass: s.holds(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    emit(cfg, &rows, &["t", "b", "lower", "value", "upper", "pass"])?;
    Ok(Outcome {
        summary: Some(pass_summary(rows.iter().map(|r| r.pass))),
    })
}

#[derive(Serialize)]
struct EnvelopeRow {
    n: u64,
    a: f64,
    b: f64,
    envelopes: String,
    envelope_worst_decay: f64,
    envelope_worst_uniform: f64,
    tail: String,
    tail_worst: f64,
    failures: String,
    pass: bool,
}

const ENVELOPE_GRID: usize = 4096;
const MARGIN_TOL: f64 = 1e-9;

fn envelopes(cfg: &RunConfig) -> Result<Outcome> {
    let ns = cfg.require_ns()?;
    cfg.guard_threshold()?;
    let psi = cfg.psi.build()?;
    let opts = cfg.verify_options();
    let rows = ns
        .par_iter()
        .map(|&n| {
            let rep = inequality_suite(&psi, cfg.beta, n, ENVELOPE_GRID, &opts)?;
            let status = |s| serde_json::to_value(s).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            Ok(EnvelopeRow {
                n,
                a: rep.a,
                b: rep.b,
                envelopes: status(rep.envelopes),
                envelope_worst_decay: rep.envelope_worst_decay,
                envelope_worst_uniform: rep.envelope_worst_uniform,
                tail: status(rep.tail),
                tail_worst: rep.tail_worst,
                failures: rep.failures(MARGIN_TOL).join(";"),
                pass: rep.all_hold(MARGIN_TOL),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    emit(
        cfg,
        &rows,
        &[
            "n",
            "a",
            "b",
            "envelopes",
            "envelope_worst_decay",
            "envelope_worst_uniform",
            "tail",
            "tail_worst",
            "failures",
            "pass",
        ],
    )?;
    Ok(Outcome {
        summary: Some(pass_summary(rows.iter().map(|r| r.pass))),
    })
}

fn exp_power_only(cfg: &RunConfig, what: &str) -> Result<(f64, f64)> {
    cfg.psi
        .exp_power()
        .ok_or_else(|| Error::Domain(format!("{what} needs --family exp-power")))
}

fn table(cfg: &RunConfig) -> Result<Outcome> {
    let (alpha, r) = exp_power_only(cfg, "table")?;
    let ns = cfg.require_ns()?;
    cfg.guard_threshold()?;
    let mode = cfg.mode.expect("table carries a mode");
    let mut rows = Vec::new();
    for p in cfg.exponents_or(&["inf"]) {
        rows.extend(corollary_table(alpha, r, cfg.beta, mode, p, ns, &cfg.verify_options())?);
    }
    rows.sort_by_key(|row| row.n);
    emit(cfg, &rows, &COROLLARY_HEADER)?;
    Ok(Outcome::default())
}

#[derive(Serialize)]
struct AsympOut {
    n: u64,
    p_or_s: Exponent,
    proxy: f64,
    reference: f64,
    ratio: f64,
    normalized: f64,
}

fn asymp(cfg: &RunConfig) -> Result<Outcome> {
    let (alpha, r) = exp_power_only(cfg, "asymp")?;
    let ns = cfg.require_ns()?;
    cfg.guard_threshold()?;
    let mode = cfg.mode.expect("asymp carries a mode");
    let mut rows = Vec::new();
    for p in cfg.exponents_or(&["inf"]) {
        let scan = asymp_scan(alpha, r, cfg.beta, mode, p, ns, &cfg.verify_options())?;
        eprintln!(
            "asymp: p_or_s={p} min_ratio={:.6e} max_ratio={:.6e} spread={:.6}",
            scan.min_ratio, scan.max_ratio, scan.spread
        );
        rows.extend(scan.rows.iter().map(|row| AsympOut {
            n: row.n,
            p_or_s: p,
            proxy: row.proxy,
            reference: row.reference,
            ratio: row.ratio,
            normalized: row.normalized,
        }));
    }
    emit(cfg, &rows, &["n", "p_or_s", "proxy", "reference", "ratio", "normalized"])?;
    Ok(Outcome::default())
}
