//! JSON report and CSV spectra.
//!
//! The report carries no timings or host data, so the same configuration
//! and seed give byte-identical output.

use std::io::Write;

use serde::Serialize;
use witten_core::verifier::{CountCheck, Diagnostics, HeuristicWindow, SweepEntry, VerificationRun};
use witten_core::witten::{DeformedComplex, OperatorStats};
use witten_core::CriticalPoint;

use crate::config::ResolvedConfig;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdicts {
    pub weak: Vec<bool>,
    pub strong: Vec<bool>,
    pub strong_slack: Vec<i64>,
    pub euler: bool,
    pub counts: Vec<CountCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsAt {
    pub t: f64,
    pub operators: Vec<OperatorStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report<'a> {
    pub config: &'a ResolvedConfig,
    pub betti: &'a [usize],
    pub betti_rank: &'a [usize],
    pub morse: &'a [usize],
    pub critical_points: &'a [CriticalPoint],
    pub heuristic_window: &'a HeuristicWindow,
    pub operator_stats: Vec<StatsAt>,
    pub sweep: &'a [SweepEntry],
    pub verdicts: Verdicts,
    pub failures: &'a [String],
    pub diagnostics: &'a Diagnostics,
    pub passed: bool,
}

impl<'a> Report<'a> {
    pub fn new(config: &'a ResolvedConfig, run: &'a VerificationRun) -> Result<Self, CliError> {
        let mut operator_stats = Vec::with_capacity(config.t_list.len());
        for &t in &config.t_list {
            let cx = DeformedComplex::new(&config.grid, &config.function, t)?;
            let operators = (0..=cx.dim()).map(|q| cx.stats(q)).collect::<Result<_, _>>()?;
            operator_stats.push(StatsAt { t, operators });
        }
        let v = &run.verdicts;
        Ok(Self {
            config,
            betti: &run.betti,
            betti_rank: &run.betti_rank,
            morse: &run.morse,
            critical_points: &run.critical_points,
            heuristic_window: &run.heuristic_window,
            operator_stats,
            sweep: &run.sweep,
            verdicts: Verdicts {
                weak: v.weak_ok.clone(),
                strong: v.strong_ok.clone(),
                strong_slack: v.strong_slack.clone(),
                euler: v.euler_equal,
                counts: v.counts_match.clone(),
            },
            failures: &run.failures,
            diagnostics: &run.diagnostics,
            passed: run.passed(),
        })
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.into()))?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Serialize)]
struct Row {
    q: usize,
    t: f64,
    index: usize,
    lambda: f64,
    residual: f64,
    converged: bool,
}

/// One row per computed eigenvalue: `q,t,index,lambda,residual,converged`.
pub fn write_spectra_csv<W: Write>(w: W, entries: &[SweepEntry]) -> Result<(), CliError> {
    let mut csv = csv::Writer::from_writer(w);
    for e in entries {
        for (index, ((&lambda, &residual), &converged)) in e.eigenvalues.iter().zip(&e.residuals).zip(&e.converged).enumerate() {
            csv.serialize(Row { q: e.q, t: e.t, index, lambda, residual, converged }).map_err(|e| CliError::Io(e.into()))?;
        }
    }
    csv.flush()?;
    Ok(())
}
