//! End-to-end verification: Betti numbers, low-lying counts across a
//! t-sweep, Morse inequalities, exactness of the small-eigenvalue complex,
//! trial-form diagnostics and spectral-gap growth.

use std::collections::BTreeMap;

use faer::Mat;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{count_below, dense_eigen, detect_gap, kernel_dimension, smallest_eigs, EigResult, GapAnalysis, SpectrumRequest, DENSE_LIMIT};
use crate::error::{Result, WittenError};
use crate::exterior::binomial;
use crate::morse::{find_critical_points, morse_counts, CriticalPoint, MorseFunctionSpec, MorseProfile};
use crate::oscillator::{trial_form, TrialChart, TrialFormSpec};
use crate::sparse::CsrMatrix;
use crate::torus::{coboundary, Cochain, TorusGrid};
use crate::tunneling::{tunneling_spectrum, TunnelingSpectrum};
use crate::witten::{witten_laplacian, DeformedComplex, EXPONENT_LIMIT};

/// Prime for the exact rank oracle.
pub const RANK_PRIME: u64 = 1_000_000_007;

// ---------------------------------------------------------------- Betti numbers

/// Rank of an integer matrix modulo [`RANK_PRIME`] by sparse row reduction.
pub fn rank_mod_p(m: &CsrMatrix) -> Result<usize> {
    let p = RANK_PRIME;
    let to_mod = |v: f64| -> Result<u64> {
        if v.fract() != 0.0 || !v.is_finite() {
            return Err(WittenError::InvalidArgument(format!("rank oracle needs integer entries, got {v}")));
        }
        Ok((v as i64).rem_euclid(p as i64) as u64)
    };
    let mut pivots: Vec<Option<Vec<(usize, u64)>>> = vec![None; m.ncols()];
    let mut rank = 0;
    for r in 0..m.nrows() {
        let mut row: Vec<(usize, u64)> = Vec::with_capacity(m.row_nnz(r));
        for (c, v) in m.row(r) {
            let x = to_mod(v)?;
            if x != 0 {
                row.push((c, x));
            }
        }
        row.sort_by_key(|e| e.0);
        while let Some(&(lead, a)) = row.first() {
            match &pivots[lead] {
                Some(piv) => {
                    // pivots are normalized to a leading 1
                    row = axpy_mod(&row, piv, p - a, p);
                }
                None => {
                    let inv = pow_mod(a, p - 2, p);
                    let normalized = row.iter().map(|&(c, v)| (c, v * inv % p)).collect();
                    pivots[lead] = Some(normalized);
                    rank += 1;
                    break;
                }
            }
        }
    }
    Ok(rank)
}

fn axpy_mod(x: &[(usize, u64)], y: &[(usize, u64)], a: u64, p: u64) -> Vec<(usize, u64)> {
    let mut out = Vec::with_capacity(x.len() + y.len());
    let (mut i, mut j) = (0, 0);
    while i < x.len() || j < y.len() {
        let take_x = j >= y.len() || (i < x.len() && x[i].0 < y[j].0);
        let take_y = i >= x.len() || (j < y.len() && y[j].0 < x[i].0);
        let (c, v) = if take_x {
            i += 1;
            x[i - 1]
        } else if take_y {
            j += 1;
            (y[j - 1].0, y[j - 1].1 * a % p)
        } else {
            i += 1;
            j += 1;
            (x[i - 1].0, (x[i - 1].1 + y[j - 1].1 * a) % p)
        };
        if v != 0 {
            out.push((c, v));
        }
    }
    out
}

fn pow_mod(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    r
}

/// `b_q = dim C^q − rank d_q − rank d_{q−1}` from exact ranks.
pub fn betti_rank_oracle(grid: &TorusGrid) -> Result<Vec<usize>> {
    let n = grid.dim();
    let ranks = (0..n).map(|q| rank_mod_p(&coboundary(grid, q)?)).collect::<Result<Vec<_>>>()?;
    Ok((0..=n)
        .map(|q| {
            let out = if q < n { ranks[q] } else { 0 };
            let inc = if q > 0 { ranks[q - 1] } else { 0 };
            grid.cell_count(q) - out - inc
        })
        .collect())
}

/// Kernel dimensions of the undeformed Laplacian, one per degree.
pub fn betti_spectral(grid: &TorusGrid, solver: &SolverSettings) -> Result<Vec<usize>> {
    let n = grid.dim();
    let cx = DeformedComplex::new(grid, &MorseFunctionSpec::zero(n), 0.0)?;
    (0..=n)
        .map(|q| {
            let s = witten_laplacian(&cx, q)?;
            let k = (binomial(n, q) + 3).min(s.nrows());
            let req = SpectrumRequest { q, t: 0.0, k, tol: solver.tol, max_iter: solver.max_iter, seed: solver.seed, want_vectors: false };
            let r = smallest_eigs(&s, &req)?;
            if !r.all_converged() {
                return Err(WittenError::NotConverged { converged: r.converged.iter().filter(|c| **c).count(), wanted: k, iterations: r.iterations });
            }
            let kd = kernel_dimension(&r.values, r.scale);
            if !kd.separated {
                return Err(WittenError::Invariant(format!("kernel of the degree-{q} Laplacian is not separated from the spectrum")));
            }
            Ok(kd.dim)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BettiReport {
    pub spectral: Vec<usize>,
    pub rank: Vec<usize>,
}

/// Betti numbers computed spectrally and by exact rank; they must agree.
pub fn betti_numbers(grid: &TorusGrid, solver: &SolverSettings) -> Result<Vec<usize>> {
    Ok(betti_report(grid, solver)?.spectral)
}

pub fn betti_report(grid: &TorusGrid, solver: &SolverSettings) -> Result<BettiReport> {
    let spectral = betti_spectral(grid, solver)?;
    let rank = betti_rank_oracle(grid)?;
    if spectral != rank {
        return Err(WittenError::BettiMismatch { spectral, rank });
    }
    Ok(BettiReport { spectral, rank })
}

// ---------------------------------------------------------------- inequalities

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountCheck {
    pub q: usize,
    pub t: f64,
    pub low_count: usize,
    pub expected: usize,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    pub betti: Vec<usize>,
    pub morse: Vec<usize>,
    pub weak_ok: Vec<bool>,
    /// `Σ_{j≤q} (−1)^{q−j} (m_j − b_j)`.
    pub strong_slack: Vec<i64>,
    pub strong_ok: Vec<bool>,
    pub euler_betti: i64,
    pub euler_morse: i64,
    pub euler_equal: bool,
    pub counts_match: Vec<CountCheck>,
}

impl InequalityReport {
    pub fn all_ok(&self) -> bool {
        self.weak_ok.iter().all(|&x| x) && self.strong_ok.iter().all(|&x| x) && self.euler_equal && self.counts_match.iter().all(|c| c.ok)
    }
}

fn alternating(v: &[i64], q: usize) -> i64 {
    (0..=q).map(|j| if (q - j).is_multiple_of(2) { v[j] } else { -v[j] }).sum()
}

pub fn check_inequalities(b: &[usize], m: &[usize]) -> Result<InequalityReport> {
    if b.len() != m.len() || b.is_empty() {
        return Err(WittenError::InvalidArgument(format!("Betti and Morse vectors differ in length ({} vs {})", b.len(), m.len())));
    }
    let n = b.len() - 1;
    let bi: Vec<i64> = b.iter().map(|&x| x as i64).collect();
    let mi: Vec<i64> = m.iter().map(|&x| x as i64).collect();
    let diff: Vec<i64> = mi.iter().zip(&bi).map(|(m, b)| m - b).collect();
    let strong_slack: Vec<i64> = (0..=n).map(|q| alternating(&diff, q)).collect();
    let euler_betti = alternating(&bi, n);
    let euler_morse = alternating(&mi, n);
    Ok(InequalityReport {
        betti: b.to_vec(),
        morse: m.to_vec(),
        weak_ok: b.iter().zip(m).map(|(b, m)| b <= m).collect(),
        strong_ok: strong_slack.iter().map(|&s| s >= 0).collect(),
        strong_slack,
        euler_betti,
        euler_morse,
        euler_equal: euler_betti == euler_morse,
        counts_match: Vec::new(),
    })
}

// ---------------------------------------------------------------- exactness

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactnessReport {
    pub t: f64,
    pub lambda: f64,
    /// `dim E^q_{[0,λ]}` from dense eigenvalue counts.
    pub low_dims: Vec<usize>,
    /// `dim E^q_{(0,λ]} = dim E^q_{[0,λ]} − b_q`.
    pub dims: Vec<usize>,
    /// `rank(d_t^{(q)} restricted to E^q_{(0,λ]})`.
    pub ranks: Vec<usize>,
    /// Ranks visible to the dense SVD above its rounding floor.
    pub dense_ranks: Vec<usize>,
    /// Ranks taken from the high-relative-accuracy tunneling spectra.
    pub tunneling_ranks: Vec<Option<usize>>,
    pub alternating_sums: Vec<i64>,
    pub identity_holds: Vec<bool>,
    /// `max |V_{q+2}ᵀ D_{q+1} D_q V_q|` per q.
    pub composite_max: Vec<f64>,
    pub exact: bool,
}

fn csr_to_mat(m: &CsrMatrix) -> Mat<f64> {
    let mut out = Mat::zeros(m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for (c, v) in m.row(r) {
            out[(r, c)] += v;
        }
    }
    out
}

fn singular_values(m: &Mat<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let d = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    d.singular_values().iter().copied().collect()
}

/// Checks that `0 → E^0_{(0,λ]} → … → E^n_{(0,λ]} → 0` is exact.
///
/// Dense eigenvectors give the window dimensions and any restricted rank
/// whose singular values clear rounding. Ranks at the two ends are the
/// nonzero counts of the tunneling spectra in degrees `0` and `n`, which stay
/// accurate when those singular values (`√λ_tunnel`) sink below `ε‖D‖`.
pub fn exactness_check(cx: &DeformedComplex, lambda: f64, betti: &[usize]) -> Result<ExactnessReport> {
    let n = cx.dim();
    if betti.len() != n + 1 {
        return Err(WittenError::InvalidArgument("Betti vector has the wrong length".into()));
    }
    let mut bases = Vec::with_capacity(n + 1);
    let mut low_dims = Vec::with_capacity(n + 1);
    let mut scales = Vec::with_capacity(n + 1);
    for q in 0..=n {
        let s = witten_laplacian(cx, q)?;
        let (values, vectors) = dense_eigen(&s)?;
        if let Some(v) = values.iter().find(|&&v| v > 0.5 * lambda && v < 2.0 * lambda) {
            return Err(WittenError::NotInGap { lambda, q, eigenvalue: *v });
        }
        let count = values.iter().filter(|&&v| v <= lambda).count();
        low_dims.push(count);
        scales.push(s.gershgorin_bound().max(1.0));
        bases.push(vectors.subcols(0, count).to_owned());
    }
    let dims = low_dims
        .iter()
        .zip(betti)
        .enumerate()
        .map(|(q, (&l, &b))| {
            l.checked_sub(b).ok_or_else(|| WittenError::Invariant(format!("degree {q}: {l} low eigenvalues but b_q = {b}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let restricted: Vec<Mat<f64>> = (0..n)
        .map(|q| {
            let d = csr_to_mat(&cx.sym_d[q]);
            bases[q + 1].transpose() * (&d * &bases[q])
        })
        .collect();
    let mut dense_ranks = Vec::with_capacity(n + 1);
    for q in 0..=n {
        if q == n {
            dense_ranks.push(0);
            continue;
        }
        let floor = 1e3 * f64::EPSILON * scales[q].max(scales[q + 1]).sqrt();
        dense_ranks.push(singular_values(&restricted[q]).iter().filter(|&&s| s > floor).count());
    }
    let composite_max = (0..n.saturating_sub(1))
        .map(|q| {
            let c = &restricted[q + 1] * &restricted[q];
            let mut m = 0.0f64;
            for j in 0..c.ncols() {
                for i in 0..c.nrows() {
                    m = m.max(c[(i, j)].abs());
                }
            }
            m
        })
        .collect::<Vec<_>>();

    let nonzero_below = |spec: &TunnelingSpectrum| spec.nonzero().iter().filter(|&&v| v > 0.0 && v <= lambda).count();
    let mut tunneling_ranks = vec![None; n + 1];
    tunneling_ranks[0] = Some(nonzero_below(&tunneling_spectrum(&cx.grid, &cx.f, cx.t, 0)?));
    let top = nonzero_below(&tunneling_spectrum(&cx.grid, &cx.f, cx.t, n)?);
    tunneling_ranks[n - 1] = Some(match tunneling_ranks[n - 1] {
        Some(r) if r != top => {
            return Err(WittenError::Invariant(format!("tunneling ranks disagree between degree 0 ({r}) and degree {n} ({top})")))
        }
        _ => top,
    });
    let ranks: Vec<usize> = (0..=n).map(|q| tunneling_ranks[q].unwrap_or(dense_ranks[q])).collect();

    let di: Vec<i64> = dims.iter().map(|&x| x as i64).collect();
    let alternating_sums: Vec<i64> = (0..=n).map(|q| alternating(&di, q)).collect();
    let identity_holds: Vec<bool> = (0..=n).map(|q| alternating_sums[q] == ranks[q] as i64).collect();
    let floor = 1e3 * f64::EPSILON * scales.iter().cloned().fold(0.0, f64::max);
    let exact = identity_holds.iter().all(|&x| x)
        && alternating_sums[n] == 0
        && composite_max.iter().all(|&m| m <= floor)
        && (0..=n).all(|q| dims[q] == ranks[q] + if q > 0 { ranks[q - 1] } else { 0 });
    Ok(ExactnessReport {
        t: cx.t,
        lambda,
        low_dims,
        dims,
        ranks,
        dense_ranks,
        tunneling_ranks,
        alternating_sums,
        identity_holds,
        composite_max,
        exact,
    })
}

// ---------------------------------------------------------------- trial forms

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub t: f64,
    pub q: usize,
    pub point: usize,
    pub coords: Vec<f64>,
    /// `‖Δ_t v‖ / ‖v‖`.
    pub residual: f64,
    /// `‖v − ṽ‖ / ‖v‖` in the mass norm, `ṽ` the projection onto the low cluster.
    pub projection_error: f64,
    pub projection_error_sup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialGram {
    pub t: f64,
    pub q: usize,
    /// Normalized `(v_i, v_j)`.
    pub gram: Vec<Vec<f64>>,
    /// Normalized `(ṽ_i, ṽ_j)`.
    pub projected_gram: Vec<Vec<f64>>,
    pub max_off_diagonal: f64,
    pub projected_determinant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub q: usize,
    pub point: usize,
    pub residual_slope: f64,
    pub projection_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialFormDiagnostics {
    pub epsilon: f64,
    pub records: Vec<TrialRecord>,
    pub grams: Vec<TrialGram>,
    pub fits: Vec<DecayFit>,
}

impl TrialFormDiagnostics {
    pub fn residual_slopes_negative(&self) -> bool {
        self.fits.iter().all(|f| f.residual_slope < 0.0)
    }

    pub fn projection_slopes_negative(&self) -> bool {
        self.fits.iter().all(|f| f.projection_slope < 0.0)
    }
}

/// Trial-form records for the critical points of index `q` at one `t`.
///
/// `eig` must carry eigenvectors; the first `low_count` span the projector.
pub fn trial_records(
    cx: &DeformedComplex,
    q: usize,
    points: &[(usize, &CriticalPoint)],
    eig: &EigResult,
    low_count: usize,
    epsilon: f64,
) -> Result<(Vec<TrialRecord>, TrialGram)> {
    let vectors = eig.vectors.as_ref().ok_or_else(|| WittenError::InvalidRequest("trial diagnostics need eigenvectors".into()))?;
    if vectors.len() < low_count {
        return Err(WittenError::LostTrialForm { rank: vectors.len(), forms: low_count, t: cx.t });
    }
    let s = witten_laplacian(cx, q)?;
    let sqrt_m = cx.mass[q].sqrt();
    let inv_sqrt_m = cx.mass[q].inv_sqrt();
    let mut records = Vec::new();
    let mut xs = Vec::new();
    let mut projected = Vec::new();
    for &(idx, p) in points {
        let spec = TrialFormSpec { critical_point: p.clone(), t: cx.t, epsilon, chart: TrialChart::Morse };
        let v = trial_form(&spec, &cx.f, &cx.grid)?;
        let x: Vec<f64> = v.values.iter().zip(&sqrt_m).map(|(a, b)| a * b).collect();
        let norm = dot(&x, &x).sqrt();
        let sx = s.mul_vec(&x);
        let residual = dot(&sx, &sx).sqrt() / norm;
        let mut px = vec![0.0; x.len()];
        for u in &vectors[..low_count] {
            let c = dot(u, &x);
            for (a, b) in px.iter_mut().zip(u) {
                *a += c * b;
            }
        }
        let diff: Vec<f64> = x.iter().zip(&px).map(|(a, b)| a - b).collect();
        let projection_error = dot(&diff, &diff).sqrt() / norm;
        let diff_cochain = Cochain::new(&cx.grid, q, diff.iter().zip(&inv_sqrt_m).map(|(a, b)| a * b).collect())?;
        let projection_error_sup = diff_cochain.sup_norm() / v.sup_norm();
        records.push(TrialRecord { t: cx.t, q, point: idx, coords: p.coords.clone(), residual, projection_error, projection_error_sup });
        xs.push(x);
        projected.push(px);
    }
    let k = xs.len();
    let norms: Vec<f64> = xs.iter().map(|x| dot(x, x).sqrt()).collect();
    let gram: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| dot(&xs[i], &xs[j]) / (norms[i] * norms[j])).collect()).collect();
    let projected_gram: Vec<Vec<f64>> =
        (0..k).map(|i| (0..k).map(|j| dot(&projected[i], &projected[j]) / (norms[i] * norms[j])).collect()).collect();
    let mut max_off_diagonal = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                max_off_diagonal = max_off_diagonal.max(gram[i][j].abs());
            }
        }
    }
    let projected_determinant = if k == 0 { 1.0 } else { DMatrix::from_fn(k, k, |i, j| projected_gram[i][j]).determinant() };
    if k > 0 && !(projected_determinant > 0.0) {
        return Err(WittenError::LostTrialForm { rank: low_count, forms: k, t: cx.t });
    }
    Ok((records, TrialGram { t: cx.t, q, gram, projected_gram, max_off_diagonal, projected_determinant }))
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fits log-decay rates per critical point across the recorded t values.
pub fn trial_diagnostics(epsilon: f64, records: Vec<TrialRecord>, grams: Vec<TrialGram>) -> TrialFormDiagnostics {
    let mut groups: BTreeMap<(usize, usize), Vec<&TrialRecord>> = BTreeMap::new();
    for r in &records {
        groups.entry((r.q, r.point)).or_default().push(r);
    }
    let fits = groups
        .into_iter()
        .filter(|(_, rs)| rs.len() >= 2)
        .map(|((q, point), rs)| {
            let t: Vec<f64> = rs.iter().map(|r| r.t).collect();
            let lr: Vec<f64> = rs.iter().map(|r| r.residual.max(f64::MIN_POSITIVE).ln()).collect();
            let lp: Vec<f64> = rs.iter().map(|r| r.projection_error.max(f64::MIN_POSITIVE).ln()).collect();
            DecayFit { q, point, residual_slope: linear_fit(&t, &lr).0, projection_slope: linear_fit(&t, &lp).0 }
        })
        .collect();
    TrialFormDiagnostics { epsilon, records, grams, fits }
}

// ---------------------------------------------------------------- gap growth

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapGrowth {
    pub q: usize,
    pub t: Vec<f64>,
    /// First eigenvalue above the low cluster at each t.
    pub lambda: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub ok: bool,
}

/// Fits `λ_{m_q+1}(t) ≈ c·t + d` and checks `c > 0`, `λ ≥ c·t/2`.
pub fn gap_growth_check(q: usize, samples: &[(f64, f64)]) -> Result<GapGrowth> {
    if samples.len() < 3 {
        return Err(WittenError::InvalidArgument(format!("gap growth needs at least 3 t samples, got {}", samples.len())));
    }
    let t: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let lambda: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (slope, intercept) = linear_fit(&t, &lambda);
    let ok = slope > 0.0 && t.iter().zip(&lambda).all(|(t, l)| *l >= slope * t / 2.0);
    Ok(GapGrowth { q, t, lambda, slope, intercept, ok })
}

// ---------------------------------------------------------------- sweep

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Eigenvalues per solve; `None` means `m_q + b_q + 4`.
    pub k: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { k: None, tol: 1e-8, max_iter: 4000, seed: 42 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub grid: TorusGrid,
    pub function: MorseFunctionSpec,
    pub t_list: Vec<f64>,
    /// Constant in the fixed threshold `t·e^{−Ct}`.
    pub c: f64,
    /// Cutoff radius of the trial forms.
    pub epsilon: f64,
    pub solver: SolverSettings,
    /// Trial-form and gap-growth diagnostics (needs eigenvectors).
    pub diagnostics: bool,
    /// Dense exactness check at every t when all degrees fit in memory.
    pub exactness: bool,
}

impl SweepConfig {
    pub fn new(grid: TorusGrid, function: MorseFunctionSpec, t_list: Vec<f64>) -> Self {
        let epsilon = 0.1;
        Self { grid, function, t_list, c: epsilon * epsilon / 8.0, epsilon, solver: SolverSettings::default(), diagnostics: false, exactness: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSource {
    /// Connected components of the effective-conductance graph.
    Tunneling,
    /// `low_1 − nz_0 − nz_2` in two dimensions.
    Complement,
    /// Eigenvalues below the rounding floor.
    Spectral,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    FixedThreshold,
    AutoGap,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepEntry {
    pub t: f64,
    pub q: usize,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub converged: Vec<bool>,
    pub seed: u64,
    pub kernel_dim: usize,
    pub kernel_source: KernelSource,
    pub low_count: usize,
    pub fixed_count: Option<usize>,
    pub fixed_threshold: f64,
    pub threshold: f64,
    pub gap_ratio: f64,
    /// Low cluster from the tunneling reduction (degrees 0 and n).
    pub tunneling: Option<Vec<f64>>,
}

/// Count recorded for an entry under the chosen mode.
pub fn low_lying_count(entry: &SweepEntry, mode: CountMode) -> Result<usize> {
    match mode {
        CountMode::AutoGap => Ok(entry.low_count),
        CountMode::FixedThreshold => entry
            .fixed_count
            .ok_or(WittenError::InconclusiveCount { value: f64::NAN, threshold: entry.fixed_threshold }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeuristicWindow {
    pub t_min: f64,
    pub t_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub trial: Option<TrialFormDiagnostics>,
    pub gap_growth: Vec<GapGrowth>,
    pub exactness: Vec<ExactnessReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationRun {
    pub config: SweepConfig,
    pub betti: Vec<usize>,
    pub betti_rank: Vec<usize>,
    pub morse: Vec<usize>,
    pub critical_points: Vec<CriticalPoint>,
    pub heuristic_window: HeuristicWindow,
    pub sweep: Vec<SweepEntry>,
    pub verdicts: InequalityReport,
    /// Invariant breaches found while assembling the run.
    pub failures: Vec<String>,
    pub diagnostics: Diagnostics,
}

impl VerificationRun {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.verdicts.all_ok()
    }

    pub fn entry(&self, q: usize, t: f64) -> Option<&SweepEntry> {
        self.sweep.iter().find(|e| e.q == q && e.t == t)
    }
}

/// The window in which the discretization resolves the localized eigenforms;
/// reported, not enforced.
pub fn heuristic_window(grid: &TorusGrid, f: &MorseFunctionSpec, profile: &MorseProfile) -> HeuristicWindow {
    let min_curv = profile
        .points
        .iter()
        .flat_map(|p| p.hessian_eigenvalues.iter().map(|v| v.abs()))
        .fold(f64::INFINITY, f64::min);
    let h = grid.spacings().into_iter().fold(0.0, f64::max);
    let overflow = EXPONENT_LIMIT / (f.gradient_bound() * h).max(f64::MIN_POSITIVE);
    let resolution = 1.0 / (16.0 * h * h * f.hessian_bound());
    HeuristicWindow { t_min: 10.0 / min_curv.sqrt(), t_max: overflow.min(resolution) }
}

struct Solve {
    entry: SweepEntry,
    eig: EigResult,
    tunneling: Option<TunnelingSpectrum>,
}

fn solve_one(cx: &DeformedComplex, q: usize, k: usize, cfg: &SweepConfig) -> Result<Solve> {
    let t = cx.t;
    let s = witten_laplacian(cx, q)?;
    let mut req = SpectrumRequest { q, t, k: k.min(s.nrows()), tol: cfg.solver.tol, max_iter: cfg.solver.max_iter, seed: cfg.solver.seed, want_vectors: false };
    if cfg.diagnostics {
        req = req.with_vectors();
    }
    let eig = smallest_eigs(&s, &req)?;
    if !eig.all_converged() {
        return Err(WittenError::NotConverged { converged: eig.converged.iter().filter(|c| **c).count(), wanted: req.k, iterations: eig.iterations });
    }
    let gap: GapAnalysis = detect_gap(&eig.values, req.k - 1, eig.scale)?;
    let fixed_threshold = t * (-cfg.c * t).exp();
    let fixed_count = count_below(&eig, fixed_threshold).ok();
    let n = cx.dim();
    let tunneling = if q == 0 || q == n { tunneling_spectrum(&cx.grid, &cx.f, t, q).ok() } else { None };
    let (kernel_dim, kernel_source) = match &tunneling {
        Some(tun) => (tun.kernel_dim, KernelSource::Tunneling),
        None => (kernel_dimension(&eig.values, eig.scale).dim.min(gap.low_count), KernelSource::Spectral),
    };
    let entry = SweepEntry {
        t,
        q,
        eigenvalues: eig.values.clone(),
        residuals: eig.residuals.clone(),
        converged: eig.converged.clone(),
        seed: eig.seed,
        kernel_dim,
        kernel_source,
        low_count: gap.low_count,
        fixed_count,
        fixed_threshold,
        threshold: gap.threshold_used,
        gap_ratio: gap.gap_ratio,
        tunneling: tunneling.as_ref().map(|tn| tn.values.clone()),
    };
    Ok(Solve { entry, eig, tunneling })
}

/// Full pipeline for one configuration.
pub fn run_sweep(cfg: &SweepConfig) -> Result<VerificationRun> {
    if cfg.t_list.is_empty() {
        return Err(WittenError::InvalidArgument("t list is empty".into()));
    }
    for &t in &cfg.t_list {
        if !(t.is_finite() && t >= 0.0) {
            return Err(WittenError::InvalidT(t));
        }
    }
    let grid = &cfg.grid;
    let f = &cfg.function;
    let n = grid.dim();
    let profile = find_critical_points(f, grid)?;
    let morse = morse_counts(&profile)?;
    let report = betti_report(grid, &cfg.solver)?;
    let betti = report.spectral.clone();
    let complexes = cfg.t_list.iter().map(|&t| DeformedComplex::new(grid, f, t)).collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..complexes.len()).flat_map(|i| (0..=n).map(move |q| (i, q))).collect();
    let solves = jobs
        .par_iter()
        .map(|&(i, q)| {
            let k = cfg.solver.k.unwrap_or(morse[q] + betti[q] + 4);
            solve_one(&complexes[i], q, k, cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut failures = Vec::new();
    let mut sweep: Vec<SweepEntry> = solves.iter().map(|s| s.entry.clone()).collect();
    if n == 2 {
        for i in 0..complexes.len() {
            let nz = |q: usize| {
                let s = &solves[i * (n + 1) + q];
                match &s.tunneling {
                    Some(tun) => tun.nonzero().iter().filter(|&&v| v <= s.entry.threshold).count(),
                    None => s.entry.low_count - s.entry.kernel_dim,
                }
            };
            let (nz0, nz2) = (nz(0), nz(2));
            let e = &mut sweep[i * (n + 1) + 1];
            if e.low_count >= nz0 + nz2 {
                e.kernel_dim = e.low_count - nz0 - nz2;
                e.kernel_source = KernelSource::Complement;
            } else {
                failures.push(format!("t={}: q=1 low count {} below nz_0 + nz_2 = {}", e.t, e.low_count, nz0 + nz2));
            }
        }
    }

    let mut verdicts = check_inequalities(&betti, &morse)?;
    for e in &sweep {
        verdicts.counts_match.push(CountCheck { q: e.q, t: e.t, low_count: e.low_count, expected: morse[e.q], ok: e.low_count == morse[e.q] });
        if e.kernel_dim != betti[e.q] {
            failures.push(format!("t={} q={}: kernel dimension {} differs from b_q = {}", e.t, e.q, e.kernel_dim, betti[e.q]));
        }
        if e.kernel_dim > e.low_count {
            failures.push(format!("t={} q={}: kernel dimension {} exceeds low count {}", e.t, e.q, e.kernel_dim, e.low_count));
        }
    }
    let low: Vec<Vec<i64>> =
        (0..complexes.len()).map(|i| (0..=n).map(|q| sweep[i * (n + 1) + q].low_count as i64 - betti[q] as i64).collect()).collect();
    for (i, row) in low.iter().enumerate() {
        for q in 0..=n {
            let s = alternating(row, q);
            if s < 0 || (q == n && s != 0) {
                failures.push(format!("t={}: alternating low-count excess {s} at q={q}", cfg.t_list[i]));
            }
        }
    }

    let mut diagnostics = Diagnostics { trial: None, gap_growth: Vec::new(), exactness: Vec::new() };
    if cfg.diagnostics {
        let mut records = Vec::new();
        let mut grams = Vec::new();
        for (i, cx) in complexes.iter().enumerate() {
            for q in 0..=n {
                let points: Vec<(usize, &CriticalPoint)> = profile.points.iter().enumerate().filter(|(_, p)| p.index == q).collect();
                let s = &solves[i * (n + 1) + q];
                let (r, g) = trial_records(cx, q, &points, &s.eig, s.entry.low_count, cfg.epsilon)?;
                records.extend(r);
                grams.push(g);
            }
        }
        diagnostics.trial = Some(trial_diagnostics(cfg.epsilon, records, grams));
        if cfg.t_list.len() >= 3 {
            for q in 0..=n {
                let samples: Vec<(f64, f64)> = (0..complexes.len())
                    .filter_map(|i| {
                        let e = &sweep[i * (n + 1) + q];
                        e.eigenvalues.get(e.low_count).map(|&v| (e.t, v))
                    })
                    .collect();
                diagnostics.gap_growth.push(gap_growth_check(q, &samples)?);
            }
        }
    }
    if cfg.exactness && (0..=n).all(|q| grid.cell_count(q) <= DENSE_LIMIT) {
        for (i, cx) in complexes.iter().enumerate() {
            let entries = &sweep[i * (n + 1)..(i + 1) * (n + 1)];
            let top = entries.iter().map(|e| e.eigenvalues[e.low_count - 1].max(0.0)).fold(0.0, f64::max);
            let bottom = entries.iter().filter_map(|e| e.eigenvalues.get(e.low_count).copied()).fold(f64::INFINITY, f64::min);
            if top.max(f64::MIN_POSITIVE) * 4.0 >= bottom {
                failures.push(format!("t={}: no common spectral gap for the exactness check", cx.t));
                continue;
            }
            let lambda = (top.max(f64::EPSILON * bottom) * bottom).sqrt();
            let rep = exactness_check(cx, lambda, &betti)?;
            if !rep.exact {
                failures.push(format!("t={}: small-eigenvalue complex is not exact", cx.t));
            }
            diagnostics.exactness.push(rep);
        }
    }

    Ok(VerificationRun {
        config: cfg.clone(),
        betti,
        betti_rank: report.rank,
        morse,
        critical_points: profile.points.clone(),
        heuristic_window: heuristic_window(grid, f, &profile),
        sweep,
        verdicts,
        failures,
        diagnostics,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
