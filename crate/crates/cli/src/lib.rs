//! Command-line front end: configuration, dispatch, reports and exports.
//!
//! Exit codes: `0` success, `1` an inequality or count verdict failed,
//! `2` a numerical failure, `3` a configuration or usage error.

pub mod config;
pub mod report;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;
use witten_core::eigen::{smallest_eigs, SpectrumRequest};
use witten_core::morse::{find_critical_points, morse_counts};
use witten_core::oscillator::{model_spectrum, ModelOperatorSpec};
use witten_core::verifier::{betti_rank_oracle, run_sweep};
use witten_core::witten::{witten_laplacian, DeformedComplex};
use witten_core::{CsrMatrix, WittenError};

pub use config::{load_config, parse_config, ResolvedConfig, RunConfig};

pub const THREADS_ENV: &str = "WITTEN_LAB_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] WittenError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("verdict failed: {0}")]
    Verdict(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verdict(_) => 1,
            CliError::Io(_) => 2,
            CliError::Config(_) | CliError::Usage(_) => 3,
            CliError::Core(e) => match e {
                WittenError::InvalidGrid(_)
                | WittenError::DegreeOutOfRange { .. }
                | WittenError::InvalidFunction(_)
                | WittenError::InvalidT(_)
                | WittenError::InvalidRequest(_)
                | WittenError::InvalidArgument(_)
                | WittenError::TrialFormDoesNotFit { .. }
                | WittenError::Overflow { .. }
                | WittenError::TooLarge { .. }
                | WittenError::Format(_) => 3,
                _ => 2,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "witten-lab", version, about = "Discrete Witten deformation laboratory on flat tori")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full sweep with Betti, Morse and inequality verdicts; writes a JSON report.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Lowest eigenvalues of the Witten Laplacian at one (q, t).
    Spectrum {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        q: usize,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        k: Option<usize>,
    },
    /// CSV of low spectra across the configured t values.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the CSV here instead of stdout or `output.csv_path`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact spectrum of the quadratic model operator.
    Oscillator {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        q: usize,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 5)]
        count: usize,
    },
    /// Critical points of the configured Morse function.
    CriticalPoints {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// MatrixMarket files for d_{q-1}, d_q and the Witten Laplacian at (q, t).
    ExportOperator {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        q: usize,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

/// Configuration used when a command that accepts `--config` is run without one.
pub const DEFAULT_CONFIG: &str = "[manifold]\nn = 2\nresolutions = [16, 16]\n\n[morse]\npreset = \"f2\"\n";

fn config_or_default(path: Option<&Path>) -> Result<ResolvedConfig, CliError> {
    match path {
        Some(p) => load_config(p),
        None => parse_config(DEFAULT_CONFIG),
    }
}

/// Builds the global rayon pool from `WITTEN_LAB_THREADS` if set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    // A pool may already exist when called twice in one process; that is harmless.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Parses arguments and runs; returns the process exit code.
pub fn run_from_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    let result = init_threads().and_then(|_| dispatch(&cli.command, out));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(command: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Verify { config } => verify(&load_config(config)?, out),
        Command::Spectrum { config, q, t, k } => spectrum(&config_or_default(config.as_deref())?, *q, *t, *k, out),
        Command::Sweep { config, out: path } => sweep(&config_or_default(config.as_deref())?, path.as_deref(), out),
        Command::Oscillator { n, r, q, t, count } => oscillator(*n, *r, *q, *t, *count, out),
        Command::CriticalPoints { config } => critical_points(&config_or_default(config.as_deref())?, out),
        Command::ExportOperator { config, q, t, out: dir } => {
            let cfg = config_or_default(config.as_deref())?;
            let files = export_operator(&cfg, *q, *t, dir)?;
            for f in files {
                writeln!(out, "{}", f.display())?;
            }
            Ok(())
        }
    }
}

pub fn verify(cfg: &ResolvedConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let run = run_sweep(&cfg.sweep())?;
    let report = report::Report::new(cfg, &run)?;
    let json = report.to_json()?;
    match &cfg.output.report_path {
        Some(p) => std::fs::write(p, &json)?,
        None => out.write_all(json.as_bytes())?,
    }
    if let Some(p) = &cfg.output.csv_path {
        report::write_spectra_csv(File::create(p)?, &run.sweep)?;
    }
    if cfg.output.export_operators {
        let dir = cfg.output.export_dir.clone().unwrap_or_else(|| PathBuf::from("."));
        for &t in &cfg.t_list {
            for q in 0..=cfg.grid.dim() {
                export_operator(cfg, q, t, &dir)?;
            }
        }
    }
    if run.passed() {
        Ok(())
    } else {
        let mut reasons = run.failures.clone();
        if !run.verdicts.all_ok() {
            reasons.push("Morse inequality or count verdict".into());
        }
        Err(CliError::Verdict(reasons.join("; ")))
    }
}

pub fn spectrum(cfg: &ResolvedConfig, q: usize, t: f64, k: Option<usize>, out: &mut dyn Write) -> Result<(), CliError> {
    let n = cfg.grid.dim();
    if q > n {
        return Err(WittenError::DegreeOutOfRange { q, n }.into());
    }
    let cx = DeformedComplex::new(&cfg.grid, &cfg.function, t)?;
    let s = witten_laplacian(&cx, q)?;
    let k = match k.or(cfg.solver.k) {
        Some(k) => k,
        None => {
            let m = morse_counts(&find_critical_points(&cfg.function, &cfg.grid)?)?;
            let b = betti_rank_oracle(&cfg.grid)?;
            m[q] + b[q] + 4
        }
    };
    let req = SpectrumRequest::new(k.min(s.nrows()))
        .with_tol(cfg.solver.tol)
        .with_seed(cfg.solver.seed)
        .at(q, t);
    let req = SpectrumRequest { max_iter: cfg.solver.max_iter, ..req };
    let eig = smallest_eigs(&s, &req)?;
    writeln!(out, "# q = {q}, t = {t}, dim = {}, seed = {}", s.nrows(), eig.seed)?;
    writeln!(out, "{:>5}  {:>24}  {:>12}  converged", "index", "eigenvalue", "residual")?;
    for (i, ((v, r), c)) in eig.values.iter().zip(&eig.residuals).zip(&eig.converged).enumerate() {
        writeln!(out, "{i:>5}  {v:>24.16e}  {r:>12.3e}  {c}")?;
    }
    if !eig.all_converged() {
        return Err(WittenError::NotConverged {
            converged: eig.converged.iter().filter(|c| **c).count(),
            wanted: req.k,
            iterations: eig.iterations,
        }
        .into());
    }
    Ok(())
}

pub fn sweep(cfg: &ResolvedConfig, path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let mut sweep_cfg = cfg.sweep();
    sweep_cfg.diagnostics = false;
    sweep_cfg.exactness = false;
    let run = run_sweep(&sweep_cfg)?;
    match path.or(cfg.output.csv_path.as_deref()) {
        Some(p) => report::write_spectra_csv(File::create(p)?, &run.sweep)?,
        None => report::write_spectra_csv(&mut *out, &run.sweep)?,
    }
    Ok(())
}

pub fn oscillator(n: usize, r: usize, q: usize, t: f64, count: usize, out: &mut dyn Write) -> Result<(), CliError> {
    if !(t.is_finite() && t > 0.0) {
        return Err(WittenError::InvalidT(t).into());
    }
    let spec = ModelOperatorSpec::new(n, r, q, t)?;
    let spectrum = model_spectrum(&spec, count)?;
    writeln!(out, "# n = {n}, r = {r}, q = {q}, t = {t}")?;
    writeln!(out, "{:>14}  {:>12}  witness", "eigenvalue", "multiplicity")?;
    for e in &spectrum.entries {
        let quanta: Vec<String> = e.witness.quanta.iter().map(|x| x.to_string()).collect();
        let axes: Vec<String> = e.witness.axes.iter().map(|a| format!("dx{}", a + 1)).collect();
        let form = if axes.is_empty() { "1".to_string() } else { axes.join("^") };
        writeln!(out, "{:>14}  {:>12}  N=({}) {form}", e.eigenvalue, e.multiplicity, quanta.join(","))?;
    }
    Ok(())
}

pub fn critical_points(cfg: &ResolvedConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let profile = find_critical_points(&cfg.function, &cfg.grid)?;
    writeln!(out, "# Morse counts m = {:?}", profile.m)?;
    writeln!(out, "{:>5}  {:>12}  {:<32}  hessian eigenvalues", "index", "f", "coords")?;
    for p in &profile.points {
        let coords: Vec<String> = p.coords.iter().map(|c| format!("{c:.6}")).collect();
        let eigs: Vec<String> = p.hessian_eigenvalues.iter().map(|e| format!("{e:.6}")).collect();
        writeln!(out, "{:>5}  {:>12.6}  {:<32}  {}", p.index, p.f_value, coords.join(" "), eigs.join(" "))?;
    }
    Ok(())
}

fn write_mtx(m: &CsrMatrix, path: &Path) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    m.write_matrix_market(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_mtx(path: &Path) -> Result<CsrMatrix, CliError> {
    Ok(CsrMatrix::read_matrix_market(BufReader::new(File::open(path)?))?)
}

/// Writes `d_{q-1}` (when `q > 0`), `d_q` and `S_q` at `t` into `dir`.
///
/// The coboundaries are the deformed ones, which reduce to the plain
/// incidence matrices at `t = 0`.
pub fn export_operator(cfg: &ResolvedConfig, q: usize, t: f64, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let n = cfg.grid.dim();
    if q > n {
        return Err(WittenError::DegreeOutOfRange { q, n }.into());
    }
    std::fs::create_dir_all(dir)?;
    let cx = DeformedComplex::new(&cfg.grid, &cfg.function, t)?;
    let mut files = Vec::new();
    if q > 0 {
        let p = dir.join(format!("d{}_t{t}.mtx", q - 1));
        write_mtx(&cx.d_t[q - 1], &p)?;
        files.push(p);
    }
    let p = dir.join(format!("d{q}_t{t}.mtx"));
    write_mtx(&cx.d_t[q], &p)?;
    files.push(p);
    let p = dir.join(format!("laplacian{q}_t{t}.mtx"));
    write_mtx(&witten_laplacian(&cx, q)?, &p)?;
    files.push(p);
    Ok(files)
}
