//! TOML run configuration.
//!
//! ```toml
//! [manifold]
//! n = 2
//! resolutions = [96, 96]
//!
//! [morse]
//! preset = "cos_sum"
//! frequencies = [2, 1]
//! amplitudes = [1.0, 1.0]
//!
//! [deformation]
//! t_list = [20.0, 30.0, 40.0, 50.0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use witten_core::morse::TrigTerm;
use witten_core::verifier::{SolverSettings, SweepConfig};
use witten_core::{MorseFunctionSpec, TorusGrid};

use crate::CliError;

pub const DEFAULT_T_LIST: [f64; 4] = [20.0, 30.0, 40.0, 50.0];
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifold: ManifoldConfig,
    pub morse: MorseConfig,
    #[serde(default)]
    pub deformation: DeformationConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    pub n: usize,
    #[serde(default)]
    pub lengths: Option<Vec<f64>>,
    /// Signed so that negative entries get a keyed message instead of a type error.
    pub resolutions: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Frequencies {
    Flat(Vec<i32>),
    Nested(Vec<Vec<i32>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Amplitudes {
    Flat(Vec<f64>),
    Nested(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorseConfig {
    /// `cos_sum`, `cos_sum_multi`, `custom_trig`, or one of the named
    /// functions `f1`, `f2`, `f3`.
    pub preset: String,
    #[serde(default)]
    pub frequencies: Option<Frequencies>,
    #[serde(default)]
    pub amplitudes: Option<Amplitudes>,
    #[serde(default)]
    pub terms: Option<Vec<TrigTerm>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformationConfig {
    #[serde(default)]
    pub t_list: Option<Vec<f64>>,
    #[serde(default)]
    pub t_min: Option<f64>,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
    /// Constant of the fixed threshold `t·e^{−Ct}`; defaults to `ε²/8`.
    #[serde(default, rename = "C")]
    pub c: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub report_path: Option<PathBuf>,
    #[serde(default)]
    pub csv_path: Option<PathBuf>,
    #[serde(default)]
    pub export_operators: bool,
    #[serde(default)]
    pub export_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Trial-form and gap-growth diagnostics.
    #[serde(default)]
    pub trial: bool,
    /// Dense exactness check (coarse grids only).
    #[serde(default)]
    pub exactness: bool,
}

/// Validated configuration with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub grid: TorusGrid,
    pub function: MorseFunctionSpec,
    pub t_list: Vec<f64>,
    #[serde(rename = "C")]
    pub c: f64,
    pub epsilon: f64,
    pub solver: SolverSettings,
    pub output: OutputConfig,
    pub diagnostics: DiagnosticsConfig,
}

impl ResolvedConfig {
    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            grid: self.grid,
            function: self.function.clone(),
            t_list: self.t_list.clone(),
            c: self.c,
            epsilon: self.epsilon,
            solver: self.solver.clone(),
            diagnostics: self.diagnostics.trial,
            exactness: self.diagnostics.exactness,
        }
    }
}

fn schema(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

pub fn parse_config(text: &str) -> Result<ResolvedConfig, CliError> {
    let raw: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    resolve(raw)
}

pub fn load_config(path: &Path) -> Result<ResolvedConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn resolve(raw: RunConfig) -> Result<ResolvedConfig, CliError> {
    let m = &raw.manifold;
    if !(1..=3).contains(&m.n) {
        return Err(schema("manifold.n", format!("dimension must be 1, 2 or 3, got {}", m.n)));
    }
    let resolutions: Vec<usize> = match m.resolutions.len() {
        1 => vec![m.resolutions[0]; m.n],
        l if l == m.n => m.resolutions.clone(),
        l => return Err(schema("manifold.resolutions", format!("expected 1 or {} entries, got {l}", m.n))),
    }
    .into_iter()
    .map(|r| usize::try_from(r).map_err(|_| schema("manifold.resolutions", format!("entries must be positive, got {r}"))))
    .collect::<Result<_, _>>()?;
    let lengths = match &m.lengths {
        None => vec![1.0; m.n],
        Some(l) if l.len() == m.n => l.clone(),
        Some(l) => return Err(schema("manifold.lengths", format!("expected {} entries, got {}", m.n, l.len()))),
    };
    let grid = witten_core::torus::build_grid(m.n, &lengths, &resolutions).map_err(|e| schema("manifold", e))?;

    let function = resolve_function(&raw.morse, m.n)?
        .with_lengths(&lengths)
        .map_err(|e| schema("morse", e))?;

    let d = &raw.deformation;
    let t_list = match (&d.t_list, d.t_min, d.t_max) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            return Err(schema("deformation", "give either t_list or t_min/t_max, not both"));
        }
        (Some(list), None, None) => list.clone(),
        (None, Some(lo), Some(hi)) => {
            if lo > hi {
                return Err(schema("deformation.t_min", format!("t_min = {lo} exceeds t_max = {hi}")));
            }
            let steps = d.steps.unwrap_or(4);
            if steps == 0 || (steps == 1 && lo != hi) {
                return Err(schema("deformation.steps", "need at least 2 steps for a range"));
            }
            if steps == 1 {
                vec![lo]
            } else {
                (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
            }
        }
        (None, None, None) => DEFAULT_T_LIST.to_vec(),
        _ => return Err(schema("deformation", "t_min and t_max must be given together")),
    };
    if t_list.is_empty() {
        return Err(schema("deformation.t_list", "must not be empty"));
    }
    if let Some(t) = t_list.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(schema("deformation.t_list", format!("t must be finite and non-negative, got {t}")));
    }
    let epsilon = d.epsilon.unwrap_or(DEFAULT_EPSILON);
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(schema("deformation.epsilon", format!("must be positive, got {epsilon}")));
    }
    let c = d.c.unwrap_or(epsilon * epsilon / 8.0);
    if !(c > 0.0 && c.is_finite()) {
        return Err(schema("deformation.C", format!("must be positive, got {c}")));
    }

    let s = &raw.solver;
    let defaults = SolverSettings::default();
    let solver = SolverSettings {
        k: s.k,
        tol: s.tol.unwrap_or(defaults.tol),
        max_iter: s.max_iter.unwrap_or(defaults.max_iter),
        seed: s.seed.unwrap_or(defaults.seed),
    };
    if solver.k == Some(0) {
        return Err(schema("solver.k", "must be at least 1"));
    }
    if !(solver.tol > 0.0 && solver.tol < 1.0) {
        return Err(schema("solver.tol", format!("must lie in (0, 1), got {}", solver.tol)));
    }
    if solver.max_iter == 0 {
        return Err(schema("solver.max_iter", "must be at least 1"));
    }

    for (key, path) in [("output.report_path", &raw.output.report_path), ("output.csv_path", &raw.output.csv_path)] {
        if let Some(p) = path {
            check_writable_parent(key, p)?;
        }
    }
    if let Some(dir) = &raw.output.export_dir {
        if dir.exists() && !dir.is_dir() {
            return Err(schema("output.export_dir", format!("{} is not a directory", dir.display())));
        }
    }

    Ok(ResolvedConfig { grid, function, t_list, c, epsilon, solver, output: raw.output, diagnostics: raw.diagnostics })
}

fn check_writable_parent(key: &str, p: &Path) -> Result<(), CliError> {
    let parent = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(schema(key, format!("directory {} does not exist", parent.display())));
    }
    if p.is_dir() {
        return Err(schema(key, format!("{} is a directory", p.display())));
    }
    Ok(())
}

fn resolve_function(m: &MorseConfig, n: usize) -> Result<MorseFunctionSpec, CliError> {
    let named = |f: MorseFunctionSpec| {
        if f.n != n {
            Err(schema("morse.preset", format!("{} is defined on T^{}, manifold has n = {n}", m.preset, f.n)))
        } else if m.frequencies.is_some() || m.amplitudes.is_some() || m.terms.is_some() {
            Err(schema("morse.preset", format!("{} takes no frequencies, amplitudes or terms", m.preset)))
        } else {
            Ok(f)
        }
    };
    let f = match m.preset.as_str() {
        "f1" => named(MorseFunctionSpec::f1())?,
        "f2" => named(MorseFunctionSpec::f2())?,
        "f3" => named(MorseFunctionSpec::f3())?,
        "cos_sum" => {
            let (Some(Frequencies::Flat(k)), Some(Amplitudes::Flat(a))) = (&m.frequencies, &m.amplitudes) else {
                return Err(schema("morse.frequencies", "cos_sum needs flat lists `frequencies` and `amplitudes`"));
            };
            MorseFunctionSpec::cos_sum(k, a).map_err(|e| schema("morse", e))?
        }
        "cos_sum_multi" => {
            let (Some(Frequencies::Nested(k)), Some(Amplitudes::Nested(a))) = (&m.frequencies, &m.amplitudes) else {
                return Err(schema("morse.frequencies", "cos_sum_multi needs nested lists `frequencies` and `amplitudes`"));
            };
            MorseFunctionSpec::cos_sum_multi(k, a).map_err(|e| schema("morse", e))?
        }
        "custom_trig" => {
            let Some(terms) = &m.terms else {
                return Err(schema("morse.terms", "custom_trig needs a `terms` array"));
            };
            MorseFunctionSpec::custom_trig(n, terms.clone()).map_err(|e| schema("morse.terms", e))?
        }
        other => return Err(schema("morse.preset", format!("unknown preset `{other}`"))),
    };
    if f.n != n {
        return Err(schema("morse", format!("function is defined on T^{}, manifold has n = {n}", f.n)));
    }
    Ok(f)
}
