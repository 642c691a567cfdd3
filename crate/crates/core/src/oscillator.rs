//! Flat-space model: Hermite functions, the harmonic oscillator and the
//! model operator `□_t` at a nondegenerate critical point.

use faer::Mat;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::eigen::DENSE_LIMIT;
use crate::error::{Result, WittenError};
use crate::exterior::{binomial, subsets, AxisSet};
use crate::morse::{CriticalPoint, MorseFunctionSpec};
use crate::torus::{sample_form, Cochain, TorusGrid};

/// Coefficient table of `A_0..A_max_n`, lowest degree first.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteSequence {
    pub max_n: usize,
    pub coefficients: Vec<Vec<f64>>,
}

impl HermiteSequence {
    pub fn new(max_n: usize) -> Self {
        let mut c: Vec<Vec<f64>> = vec![vec![1.0]];
        for n in 0..max_n {
            let mut next = vec![0.0; n + 2];
            for (k, a) in c[n].iter().enumerate() {
                next[k + 1] += 2.0 * a;
            }
            if n > 0 {
                for (k, a) in c[n - 1].iter().enumerate() {
                    next[k] -= 2.0 * n as f64 * a;
                }
            }
            c.push(next);
        }
        Self { max_n, coefficients: c }
    }

    pub fn eval(&self, n: usize, x: f64) -> f64 {
        horner(&self.coefficients[n], x)
    }

    pub fn derivative(&self, n: usize, order: usize) -> Vec<f64> {
        let mut p = self.coefficients[n].clone();
        for _ in 0..order {
            p = p.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect();
            if p.is_empty() {
                p.push(0.0);
            }
        }
        p
    }
}

fn horner(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

/// `A_n(x)` by the three-term recursion.
pub fn hermite_polynomial(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let next = 2.0 * x * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Normalized Hermite function `φ_n(x)`, via the normalized recursion so
/// that no factorials or powers of two are formed.
pub fn hermite_function(n: usize, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    for k in 0..n {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn normalization(n: usize) -> f64 {
    let log = -0.5 * (n as f64 * 2f64.ln() + ln_factorial(n)) - 0.25 * std::f64::consts::PI.ln();
    log.exp()
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// `φ_n''(x)` from the exact derivatives of `A_n`:
/// `(A'' − 2xA' + (x² − 1)A) e^{-x²/2}` times the normalization.
pub fn hermite_function_second_derivative(seq: &HermiteSequence, n: usize, x: f64) -> f64 {
    let a = seq.eval(n, x);
    let a1 = horner(&seq.derivative(n, 1), x);
    let a2 = horner(&seq.derivative(n, 2), x);
    normalization(n) * (a2 - 2.0 * x * a1 + (x * x - 1.0) * a) * (-0.5 * x * x).exp()
}

/// Gauss–Hermite nodes and weights for the weight `e^{-x²}`.
///
/// Nodes come from the Golub–Welsch eigenproblem and are polished by Newton
/// steps on the orthonormal polynomial; weights use the Christoffel formula
/// `1 / Σ_{k<m} p_k(x)²`, which keeps the tiny outer weights accurate.
pub fn gauss_hermite(nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(nodes, nodes, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut x: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    x.sort_by(f64::total_cmp);
    let w = x
        .iter_mut()
        .map(|xi| {
            for _ in 0..3 {
                let p = orthonormal_hermite(nodes, *xi);
                let dp = (2.0 * nodes as f64).sqrt() * p[nodes - 1];
                if dp != 0.0 {
                    *xi -= p[nodes] / dp;
                }
            }
            let p = orthonormal_hermite(nodes, *xi);
            1.0 / p[..nodes].iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    (x, w)
}

/// `p_0..p_m` at `x`, orthonormal for the weight `e^{-x²}`.
fn orthonormal_hermite(m: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(m + 1);
    p.push(std::f64::consts::PI.powf(-0.25));
    let mut prev = 0.0;
    for k in 0..m {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * p[k] - (kf / (kf + 1.0)).sqrt() * prev;
        prev = p[k];
        p.push(next);
    }
    p
}

/// `∫ e^{-x²} A_n A_m dx` by Gauss–Hermite quadrature exact for degree `n + m`.
pub fn hermite_gram(n: usize, m: usize) -> f64 {
    let (x, w) = gauss_hermite((n + m).div_ceil(2) + 1);
    x.iter().zip(&w).map(|(x, w)| w * hermite_polynomial(n, *x) * hermite_polynomial(m, *x)).sum()
}

/// First `k` eigenvalues `1, 3, 5, …` of `−∂² + x²`.
pub fn oscillator_eigenvalues(k: usize) -> Vec<f64> {
    (0..k).map(|n| (2 * n + 1) as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    SecondOrder,
    FourthOrder,
    /// Sinc discrete variable representation; converges exponentially for
    /// smooth decaying eigenfunctions.
    Sinc,
}

/// Dense `−∂²` on `points` interior nodes of `[−L, L]` with Dirichlet ends.
pub fn laplacian_1d(halfwidth: f64, points: usize, stencil: Stencil) -> (Vec<f64>, DMatrix<f64>) {
    let dx = 2.0 * halfwidth / (points + 1) as f64;
    let x = (1..=points).map(|i| -halfwidth + i as f64 * dx).collect();
    let h2 = dx * dx;
    let m = DMatrix::from_fn(points, points, |i, j| {
        let d = i.abs_diff(j);
        match stencil {
            Stencil::SecondOrder => match d {
                0 => 2.0 / h2,
                1 => -1.0 / h2,
                _ => 0.0,
            },
            Stencil::FourthOrder => match d {
                0 => 30.0 / (12.0 * h2),
                1 => -16.0 / (12.0 * h2),
                2 => 1.0 / (12.0 * h2),
                _ => 0.0,
            },
            Stencil::Sinc => {
                if d == 0 {
                    std::f64::consts::PI.powi(2) / (3.0 * h2)
                } else {
                    let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
                    sign * 2.0 / (h2 * (d * d) as f64)
                }
            }
        }
    });
    (x, m)
}

/// Lowest `k` eigenvalues of a dense discretization of `−∂² + x²`.
pub fn discretized_oscillator(halfwidth: f64, points: usize, stencil: Stencil, k: usize) -> Result<Vec<f64>> {
    if points > DENSE_LIMIT {
        return Err(WittenError::TooLarge { dim: points, limit: DENSE_LIMIT });
    }
    let (x, mut a) = laplacian_1d(halfwidth, points, stencil);
    for (i, xi) in x.iter().enumerate() {
        a[(i, i)] += xi * xi;
    }
    let mut values = dense_values(&a)?;
    values.truncate(k);
    Ok(values)
}

fn dense_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let m = Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let mut v = m
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| WittenError::Invariant(format!("dense eigensolver failed: {e:?}")))?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelOperatorSpec {
    pub n: usize,
    pub r: usize,
    pub q: usize,
    pub t: f64,
}

impl ModelOperatorSpec {
    pub fn new(n: usize, r: usize, q: usize, t: f64) -> Result<Self> {
        if !(1..=3).contains(&n) || r > n || q > n {
            return Err(WittenError::InvalidArgument(format!("model operator needs 0 ≤ r, q ≤ n ≤ 3, got n={n} r={r} q={q}")));
        }
        if !(t.is_finite() && t > 0.0) {
            return Err(WittenError::InvalidT(t));
        }
        Ok(Self { n, r, q, t })
    }

    /// Shift of axis `j` (0-based) in units of `t`: the eigenvalue of the
    /// 1-D factor is `t(2N_j + shift)`, with `shift ∈ {0, 2}`.
    pub fn axis_shift(&self, j: usize, axes: AxisSet) -> usize {
        let in_j = axes.contains(j);
        let negative = j < self.r;
        if negative == in_j {
            0
        } else {
            2
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub quanta: Vec<usize>,
    /// Zero-based axes of the form component.
    pub axes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub eigenvalue: f64,
    pub multiplicity: usize,
    pub witness: Witness,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpectrum {
    pub spec: ModelOperatorSpec,
    pub entries: Vec<SpectrumEntry>,
}

impl ModelSpectrum {
    /// Eigenvalues repeated by multiplicity.
    pub fn expanded(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|e| std::iter::repeat_n(e.eigenvalue, e.multiplicity)).collect()
    }
}

/// Lowest `count` distinct eigenvalues of `□_t`, enumerated level by level.
///
/// Every eigenvalue is `t·K` with `K = 2ΣN_j + Σ shift_j` even, so the
/// search walks `K = 0, 2, 4, …` and counts the `(N, J)` realizing each
/// level.
pub fn model_spectrum(spec: &ModelOperatorSpec, count: usize) -> Result<ModelSpectrum> {
    if count == 0 {
        return Err(WittenError::InvalidArgument("count must be at least 1".into()));
    }
    let sets = subsets(spec.n, spec.q);
    let offsets: Vec<usize> = sets.iter().map(|&j| (0..spec.n).map(|a| spec.axis_shift(a, j)).sum()).collect();
    let mut entries = Vec::new();
    let mut level = 0usize;
    while entries.len() < count {
        let mut multiplicity = 0;
        let mut witness = None;
        for (j, off) in sets.iter().zip(&offsets) {
            if *off > level {
                continue;
            }
            let s = (level - off) / 2;
            multiplicity += binomial(s + spec.n - 1, spec.n - 1);
            if witness.is_none() {
                let mut quanta = vec![0; spec.n];
                quanta[0] = s;
                witness = Some(Witness { quanta, axes: j.axes().collect() });
            }
        }
        if let Some(witness) = witness {
            entries.push(SpectrumEntry { eigenvalue: spec.t * level as f64, multiplicity, witness });
        }
        level += 2;
    }
    Ok(ModelSpectrum { spec: *spec, entries })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelKernel {
    pub dim: usize,
    pub generator: Option<String>,
}

pub fn model_kernel(spec: &ModelOperatorSpec) -> ModelKernel {
    if spec.r != spec.q {
        return ModelKernel { dim: 0, generator: None };
    }
    let wedge = if spec.q == 0 {
        String::new()
    } else {
        format!(" dx_{}", (1..=spec.q).map(|i| i.to_string()).collect::<Vec<_>>().join("∧dx_"))
    };
    ModelKernel { dim: 1, generator: Some(format!("exp(-{}|x|²/2){wedge}", spec.t)) }
}

fn model_block_1d(spec: &ModelOperatorSpec, axis: usize, axes: AxisSet, halfwidth: f64, points: usize, stencil: Stencil) -> DMatrix<f64> {
    let (x, mut a) = laplacian_1d(halfwidth, points, stencil);
    let shift = spec.t * (spec.axis_shift(axis, axes) as f64 - 1.0);
    for (i, xi) in x.iter().enumerate() {
        a[(i, i)] += spec.t * spec.t * xi * xi + shift;
    }
    a
}

fn kron_sum(factors: &[DMatrix<f64>]) -> DMatrix<f64> {
    let dim: usize = factors.iter().map(|f| f.nrows()).product();
    let mut out = DMatrix::zeros(dim, dim);
    for (k, f) in factors.iter().enumerate() {
        let before: usize = factors[..k].iter().map(|f| f.nrows()).product();
        let after: usize = factors[k + 1..].iter().map(|f| f.nrows()).product();
        let p = f.nrows();
        for b in 0..before {
            for i in 0..p {
                for j in 0..p {
                    let v = f[(i, j)];
                    if v == 0.0 {
                        continue;
                    }
                    for a in 0..after {
                        out[((b * p + i) * after + a, (b * p + j) * after + a)] += v;
                    }
                }
            }
        }
    }
    out
}

fn model_blocks(spec: &ModelOperatorSpec, halfwidth: f64, points: usize, stencil: Stencil) -> Result<Vec<DMatrix<f64>>> {
    let block = points.pow(spec.n as u32);
    let dim = block * binomial(spec.n, spec.q);
    if dim > DENSE_LIMIT {
        return Err(WittenError::TooLarge { dim, limit: DENSE_LIMIT });
    }
    Ok(subsets(spec.n, spec.q)
        .into_iter()
        .map(|axes| {
            let factors: Vec<_> = (0..spec.n).map(|a| model_block_1d(spec, a, axes, halfwidth, points, stencil)).collect();
            kron_sum(&factors)
        })
        .collect())
}

/// Dense discretization of `□_t` on the box `[−L, L]^n`, one block per form
/// component `J` in lexicographic order.
pub fn discretize_model(spec: &ModelOperatorSpec, box_halfwidth: f64, points_per_axis: usize, stencil: Stencil) -> Result<DMatrix<f64>> {
    let blocks = model_blocks(spec, box_halfwidth, points_per_axis, stencil)?;
    let b = blocks[0].nrows();
    let mut out = DMatrix::zeros(b * blocks.len(), b * blocks.len());
    for (k, blk) in blocks.iter().enumerate() {
        out.view_mut((k * b, k * b), (b, b)).copy_from(blk);
    }
    Ok(out)
}

/// Lowest `k` eigenvalues of the discretized model, solved block by block.
pub fn discretized_model_spectrum(spec: &ModelOperatorSpec, box_halfwidth: f64, points_per_axis: usize, stencil: Stencil, k: usize) -> Result<Vec<f64>> {
    let mut all = Vec::new();
    for blk in model_blocks(spec, box_halfwidth, points_per_axis, stencil)? {
        all.extend(dense_values(&blk)?);
    }
    all.sort_by(f64::total_cmp);
    all.truncate(k);
    Ok(all)
}

/// Box half-width that keeps the Gaussian tails of the low states below
/// rounding: seven natural lengths `1/√t`.
pub fn model_box(t: f64) -> f64 {
    7.0 / t.sqrt()
}

/// Cutoff `κ`: one on `[−1, 1]`, zero outside `[−2, 2]`, smooth in between.
pub fn kappa(y: f64) -> f64 {
    let a = y.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        let u = (-1.0 / (2.0 - a)).exp();
        let v = (-1.0 / (a - 1.0)).exp();
        u / (u + v)
    }
}

/// Coordinates in which the Gaussian profile of a trial form is written.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialChart {
    /// Separable Morse chart `y_i² / 2 = |g_i(x_i) − g_i(p_i)|`; the profile
    /// is the exact continuum ground state on each axis.
    #[default]
    Morse,
    /// Plain Hessian-frame coordinates: `e^{-t|x − p|²/2}`.
    Hessian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFormSpec {
    pub critical_point: CriticalPoint,
    pub t: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub chart: TrialChart,
}

impl TrialFormSpec {
    pub fn degree(&self) -> usize {
        self.critical_point.index
    }
}

/// Localized ground state at a critical point.
///
/// In the Morse chart the model ground state `e^{-t|y|²/2}` reads
/// `e^{-t Σ|g_i(x_i) − g_i(p_i)|}`. The profile is multiplied by
/// `∏ κ_ε(x_i − p_i)` and placed on the component spanned by the
/// negative-curvature axes (the Hessian is diagonal for separable `f`).
pub fn trial_form(spec: &TrialFormSpec, f: &MorseFunctionSpec, grid: &TorusGrid) -> Result<Cochain> {
    let n = grid.dim();
    let p = &spec.critical_point;
    if p.coords.len() != n || f.n != n {
        return Err(WittenError::InvalidArgument("critical point, function and grid dimensions differ".into()));
    }
    if !(spec.epsilon > 0.0) {
        return Err(WittenError::InvalidArgument(format!("cutoff radius must be positive, got {}", spec.epsilon)));
    }
    let half_width = 2.0 * spec.epsilon;
    let min_period = grid.lengths().iter().cloned().fold(f64::INFINITY, f64::min);
    if 2.0 * half_width >= min_period {
        return Err(WittenError::TrialFormDoesNotFit { half_width, needed: 2.0 * half_width, min_period });
    }
    let hess = f.hessian_diagonal(&p.coords);
    let negative: Vec<usize> = (0..n).filter(|&i| hess[i] < 0.0).collect();
    if negative.len() != p.index {
        return Err(WittenError::Invariant(format!(
            "critical point index {} disagrees with {} negative Hessian axes",
            p.index,
            negative.len()
        )));
    }
    let target = AxisSet::from_axes(&negative);
    let base: Vec<f64> = (0..n).map(|i| f.axis_value(i, p.coords[i])).collect();
    sample_form(grid, p.index, |axes, x| {
        if axes != target {
            return 0.0;
        }
        let d = grid.displacement(x, &p.coords);
        let mut chi = 1.0;
        let mut exponent = 0.0;
        for i in 0..n {
            chi *= kappa(d[i] / spec.epsilon);
            if chi == 0.0 {
                return 0.0;
            }
            exponent += match spec.chart {
                TrialChart::Morse => (f.axis_value(i, p.coords[i] + d[i]) - base[i]).abs(),
                TrialChart::Hessian => 0.5 * d[i] * d[i],
            };
        }
        chi * (-spec.t * exponent).exp()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morse::find_critical_points;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_examples() {
        assert_eq!(hermite_polynomial(0, 3.7), 1.0);
        assert_eq!(hermite_polynomial(1, 5.0), 10.0);
        assert_eq!(hermite_polynomial(2, 1.0), 2.0);
        let seq = HermiteSequence::new(12);
        for n in 0..=12 {
            assert_eq!(seq.coefficients[n].len(), n + 1);
            assert_eq!(seq.coefficients[n][n], 2f64.powi(n as i32));
            assert_relative_eq!(seq.eval(n, 0.37), hermite_polynomial(n, 0.37), max_relative = 1e-12);
        }
    }

    #[test]
    fn derivative_identity() {
        let seq = HermiteSequence::new(20);
        for n in 1..=20 {
            let d = seq.derivative(n, 1);
            for k in 0..50 {
                let x = -3.0 + 6.0 * k as f64 / 49.0;
                let lhs = horner(&d, x);
                let rhs = 2.0 * n as f64 * hermite_polynomial(n - 1, x);
                assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0), "n={n} x={x}");
            }
        }
    }

    #[test]
    fn function_examples() {
        assert_relative_eq!(hermite_function(0, 0.0), PI.powf(-0.25), max_relative = 1e-15);
        let seq = HermiteSequence::new(5);
        let x = 0.7;
        let h = -hermite_function_second_derivative(&seq, 1, x) + x * x * hermite_function(1, x);
        assert!((h - 3.0 * hermite_function(1, x)).abs() < 1e-10);
        for n in 0..10 {
            for x in [0.3, 1.1, 2.5] {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                assert_relative_eq!(hermite_function(n, -x), sign * hermite_function(n, x), max_relative = 1e-14);
            }
        }
        // recursion agrees with the explicit normalization
        for n in 0..15 {
            let x = 0.9;
            let explicit = normalization(n) * hermite_polynomial(n, x) * (-x * x / 2.0).exp();
            assert_relative_eq!(hermite_function(n, x), explicit, max_relative = 1e-12);
        }
        assert!(hermite_function(200, 3.0).is_finite());
    }

    #[test]
    fn gram_examples_and_orthogonality() {
        assert_relative_eq!(hermite_gram(0, 0), PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(hermite_gram(1, 1), 2.0 * PI.sqrt(), max_relative = 1e-14);
        assert!(hermite_gram(2, 5).abs() < 1e-12);
        for n in 0..=20 {
            for m in 0..=20 {
                let expected = if n == m { (n as f64 * 2f64.ln() + ln_factorial(n)).exp() * PI.sqrt() } else { 0.0 };
                let scale = ((hermite_gram(n, n) * hermite_gram(m, m)).sqrt()).max(1.0);
                assert!((hermite_gram(n, m) - expected).abs() <= 1e-10 * scale, "n={n} m={m}");
            }
        }
    }

    #[test]
    fn hermite_functions_orthonormal() {
        let (x, w) = gauss_hermite(30);
        for n in 0..=20 {
            for m in 0..=20 {
                let s: f64 = x.iter().zip(&w).map(|(x, w)| w * (x * x).exp() * hermite_function(n, *x) * hermite_function(m, *x)).sum();
                let e = if n == m { 1.0 } else { 0.0 };
                assert!((s - e).abs() < 1e-10, "n={n} m={m}: {s}");
            }
        }
    }

    #[test]
    fn completeness_proxy() {
        let g = |x: f64| (-(x - 0.3) * (x - 0.3)).exp();
        let (lo, hi, pts) = (-15.0, 15.0, 6001);
        let dx = (hi - lo) / (pts - 1) as f64;
        let xs: Vec<f64> = (0..pts).map(|i| lo + i as f64 * dx).collect();
        let basis: Vec<Vec<f64>> = (0..=40).map(|n| xs.iter().map(|&x| hermite_function(n, x)).collect()).collect();
        let gv: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
        let mut resid = gv.clone();
        for b in &basis {
            let c: f64 = b.iter().zip(&gv).map(|(b, g)| b * g).sum::<f64>() * dx;
            for (r, bi) in resid.iter_mut().zip(b) {
                *r -= c * bi;
            }
        }
        let norm = (resid.iter().map(|r| r * r).sum::<f64>() * dx).sqrt();
        assert!(norm <= 1e-8, "residual {norm}");
    }

    #[test]
    fn oscillator_values() {
        assert_eq!(oscillator_eigenvalues(5), vec![1.0, 3.0, 5.0, 7.0, 9.0]);
        assert_eq!(oscillator_eigenvalues(1), vec![1.0]);
    }

    #[test]
    fn model_spectrum_examples() {
        let s = model_spectrum(&ModelOperatorSpec::new(1, 1, 1, 1.0).unwrap(), 3).unwrap();
        assert_eq!(s.expanded(), vec![0.0, 2.0, 4.0]);
        assert_eq!(s.entries[0].witness, Witness { quanta: vec![0], axes: vec![0] });
        let s = model_spectrum(&ModelOperatorSpec::new(1, 1, 0, 1.0).unwrap(), 1).unwrap();
        assert_eq!(s.entries[0].eigenvalue, 2.0);
        let s = model_spectrum(&ModelOperatorSpec::new(2, 1, 1, 3.0).unwrap(), 3).unwrap();
        let got: Vec<(f64, usize)> = s.entries.iter().map(|e| (e.eigenvalue, e.multiplicity)).collect();
        assert_eq!(got, vec![(0.0, 1), (6.0, 2), (12.0, 4)]);
    }

    #[test]
    fn model_spectrum_matches_brute_force() {
        for n in 1..=3 {
            for r in 0..=n {
                for q in 0..=n {
                    let spec = ModelOperatorSpec::new(n, r, q, 1.0).unwrap();
                    let ms = model_spectrum(&spec, 3).unwrap();
                    let mut brute = Vec::new();
                    for axes in subsets(n, q) {
                        let total = 6usize.pow(n as u32);
                        for code in 0..total {
                            let mut c = code;
                            let mut k = 0;
                            for a in 0..n {
                                k += 2 * (c % 6) + spec.axis_shift(a, axes);
                                c /= 6;
                            }
                            brute.push(k as f64);
                        }
                    }
                    brute.sort_by(f64::total_cmp);
                    let expanded = ms.expanded();
                    assert_eq!(&brute[..expanded.len()], &expanded[..], "n={n} r={r} q={q}");
                    assert_eq!(ms.entries[0].eigenvalue == 0.0, r == q);
                    let doubled = model_spectrum(&ModelOperatorSpec { t: 2.0, ..spec }, 3).unwrap();
                    for (a, b) in ms.entries.iter().zip(&doubled.entries) {
                        assert_eq!(2.0 * a.eigenvalue, b.eigenvalue);
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(model_kernel(&ModelOperatorSpec::new(2, 1, 1, 1.0).unwrap()).dim, 1);
        assert_eq!(model_kernel(&ModelOperatorSpec::new(2, 0, 1, 1.0).unwrap()).dim, 0);
        let k = model_kernel(&ModelOperatorSpec::new(3, 2, 2, 1.0).unwrap());
        assert_eq!(k.dim, 1);
        assert!(k.generator.unwrap().contains("dx_1∧dx_2"));
    }

    #[test]
    fn one_dimensional_oscillator_fourth_order() {
        let v = discretized_oscillator(12.0, 2048, Stencil::FourthOrder, 5).unwrap();
        for (got, want) in v.iter().zip(oscillator_eigenvalues(5)) {
            assert!((got / want - 1.0).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn discretized_model_is_symmetric_and_matches() {
        let spec = ModelOperatorSpec::new(2, 1, 1, 1.0).unwrap();
        let a = discretize_model(&spec, model_box(1.0), 24, Stencil::Sinc).unwrap();
        assert_eq!((&a - a.transpose()).amax(), 0.0);
        let v = discretized_model_spectrum(&spec, model_box(1.0), 32, Stencil::Sinc, 3).unwrap();
        assert!(v[0].abs() <= 1e-6);
        assert!((v[1] - 2.0).abs() < 1e-3);
        let big = ModelOperatorSpec::new(3, 1, 1, 1.0).unwrap();
        assert!(matches!(discretize_model(&big, 7.0, 32, Stencil::Sinc), Err(WittenError::TooLarge { .. })));
    }

    #[test]
    fn discretized_model_matches_closed_form_matrix() {
        for n in 1..=2 {
            for r in 0..=n {
                for q in 0..=n {
                    for t in [1.0, 4.0] {
                        let spec = ModelOperatorSpec::new(n, r, q, t).unwrap();
                        let want = model_spectrum(&spec, 3).unwrap().expanded();
                        let got = discretized_model_spectrum(&spec, model_box(t), 32, Stencil::Sinc, want.len()).unwrap();
                        for (g, w) in got.iter().zip(&want) {
                            let err = (g - w).abs() / w.abs().max(t);
                            assert!(err <= 1e-4, "n={n} r={r} q={q} t={t}: {g} vs {w}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn kappa_properties() {
        assert_eq!(kappa(0.5), 1.0);
        assert_eq!(kappa(-1.0), 1.0);
        assert_eq!(kappa(2.0), 0.0);
        assert_eq!(kappa(-3.0), 0.0);
        let mut prev = 1.0;
        for k in 1..100 {
            let v = kappa(1.0 + k as f64 / 100.0);
            assert!(v <= prev && v > 0.0);
            prev = v;
        }
        assert_relative_eq!(kappa(1.5), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn trial_form_support_and_norm() {
        let f = MorseFunctionSpec::f2();
        let grid = TorusGrid::uniform(2, 200).unwrap();
        let profile = find_critical_points(&f, &grid).unwrap();
        let min = profile.points.iter().find(|p| p.index == 0).unwrap().clone();
        let spec = TrialFormSpec { critical_point: min.clone(), t: 50.0, epsilon: 0.2, chart: TrialChart::Hessian };
        let v = trial_form(&spec, &f, &grid).unwrap();
        let rel = v.mass_norm().powi(2) / (PI / 50.0) - 1.0;
        assert!(rel.abs() < 0.03, "relative deviation {rel}");
        for (k, cell) in grid.enumerate_cells(0).unwrap().iter().enumerate() {
            let x = grid.midpoint(cell);
            let d = grid.displacement(&x[..2], &min.coords);
            if d[0].abs() >= 0.4 || d[1].abs() >= 0.4 {
                assert_eq!(v.values[k], 0.0);
            }
            if d[0].abs() <= 0.2 && d[1].abs() <= 0.2 {
                let g = (-25.0 * (d[0] * d[0] + d[1] * d[1])).exp() * grid.cell_volume(cell.axes);
                assert_relative_eq!(v.values[k], g, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn morse_chart_profile_and_norm() {
        let f = MorseFunctionSpec::f2();
        let grid = TorusGrid::uniform(2, 192).unwrap();
        let profile = find_critical_points(&f, &grid).unwrap();
        let min = profile.points.iter().find(|p| p.index == 0).unwrap().clone();
        let (t, eps) = (20.0, 0.1);
        let v = trial_form(&TrialFormSpec { critical_point: min.clone(), t, epsilon: eps, chart: TrialChart::Morse }, &f, &grid).unwrap();
        for (k, cell) in grid.enumerate_cells(0).unwrap().iter().enumerate() {
            let x = grid.midpoint(cell);
            let d = grid.displacement(&x[..2], &min.coords);
            if d[0].abs() <= eps && d[1].abs() <= eps {
                let g = (-t * (f.value(&x[..2]) - min.f_value)).exp() * grid.cell_volume(cell.axes);
                assert_relative_eq!(v.values[k], g, max_relative = 1e-9);
            }
        }
        // separable profile: the squared norm is a product of 1-D integrals
        let expected: f64 = (0..2)
            .map(|i| {
                let pts = 20001;
                let dx = 4.0 * eps / (pts - 1) as f64;
                (0..pts)
                    .map(|k| {
                        let y = -2.0 * eps + k as f64 * dx;
                        let e = (f.axis_value(i, min.coords[i] + y) - f.axis_value(i, min.coords[i])).abs();
                        (kappa(y / eps) * (-t * e).exp()).powi(2) * dx
                    })
                    .sum::<f64>()
            })
            .product();
        assert!((v.mass_norm().powi(2) / expected - 1.0).abs() < 1e-3);
    }

    #[test]
    fn trial_form_uses_negative_axes() {
        let f = MorseFunctionSpec::f2();
        let grid = TorusGrid::uniform(2, 48).unwrap();
        let profile = find_critical_points(&f, &grid).unwrap();
        for p in &profile.points {
            let spec = TrialFormSpec { critical_point: p.clone(), t: 5.0, epsilon: 0.1, chart: TrialChart::Morse };
            let v = trial_form(&spec, &f, &grid).unwrap();
            assert_eq!(v.q, p.index);
            assert!(v.mass_norm() > 0.0);
        }
        let spec = TrialFormSpec { critical_point: profile.points[0].clone(), t: 5.0, epsilon: 0.3, chart: TrialChart::Morse };
        assert!(matches!(trial_form(&spec, &f, &grid), Err(WittenError::TrialFormDoesNotFit { .. })));
    }
}
