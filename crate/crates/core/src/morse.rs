//! Separable trigonometric Morse functions on the torus.
//!
//! Every preset has the form `f(x) = Σ_i g_i(x_i)` with
//! `g_i(x) = Σ a cos(2π k x / L_i + φ)`, so gradients and Hessians are exact
//! and critical data can be enumerated by hand. Critical points are located by
//! damped Newton on the exact gradient, seeded at every grid vertex.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WittenError};
use crate::torus::{TorusGrid, MAX_DIM};

pub const NEWTON_TOL: f64 = 1e-12;
pub const DEGENERACY_RELTOL: f64 = 1e-8;
const NEWTON_MAX_ITER: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    CosSum,
    CosSumMulti,
    CustomTrig,
}

/// One term `amplitude · cos(2π · frequency · x_axis / L_axis + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub axis: usize,
    pub amplitude: f64,
    pub frequency: i32,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorseFunctionSpec {
    pub preset: Preset,
    pub n: usize,
    pub lengths: Vec<f64>,
    pub terms: Vec<TrigTerm>,
}

impl MorseFunctionSpec {
    /// `Σ_i a_i cos(2π k_i x_i)` on the unit torus.
    pub fn cos_sum(frequencies: &[i32], amplitudes: &[f64]) -> Result<Self> {
        if frequencies.len() != amplitudes.len() {
            return Err(WittenError::InvalidFunction("frequencies and amplitudes differ in length".into()));
        }
        let terms = frequencies
            .iter()
            .zip(amplitudes)
            .enumerate()
            .map(|(axis, (&frequency, &amplitude))| TrigTerm { axis, amplitude, frequency, phase: 0.0 })
            .collect();
        Self::build(Preset::CosSum, frequencies.len(), terms)
    }

    /// Several cosine harmonics per axis: `Σ_i Σ_m a_{im} cos(2π k_{im} x_i)`.
    pub fn cos_sum_multi(frequencies: &[Vec<i32>], amplitudes: &[Vec<f64>]) -> Result<Self> {
        if frequencies.len() != amplitudes.len() {
            return Err(WittenError::InvalidFunction("frequencies and amplitudes differ in length".into()));
        }
        let mut terms = Vec::new();
        for (axis, (ks, as_)) in frequencies.iter().zip(amplitudes).enumerate() {
            if ks.len() != as_.len() || ks.is_empty() {
                return Err(WittenError::InvalidFunction(format!("axis {axis}: mismatched or empty harmonic lists")));
            }
            for (&frequency, &amplitude) in ks.iter().zip(as_) {
                terms.push(TrigTerm { axis, amplitude, frequency, phase: 0.0 });
            }
        }
        Self::build(Preset::CosSumMulti, frequencies.len(), terms)
    }

    pub fn custom_trig(n: usize, terms: Vec<TrigTerm>) -> Result<Self> {
        Self::build(Preset::CustomTrig, n, terms)
    }

    /// `cos 2πx + cos 2πy`.
    pub fn f1() -> Self {
        Self::cos_sum(&[1, 1], &[1.0, 1.0]).expect("valid preset")
    }

    /// `cos 4πx + cos 2πy`.
    pub fn f2() -> Self {
        Self::cos_sum(&[2, 1], &[1.0, 1.0]).expect("valid preset")
    }

    /// `cos 2πx + cos 2πy + cos 2πz`.
    pub fn f3() -> Self {
        Self::cos_sum(&[1, 1, 1], &[1.0, 1.0, 1.0]).expect("valid preset")
    }

    /// The constant function 0 (not Morse; used for undeformed comparisons).
    pub fn zero(n: usize) -> Self {
        Self { preset: Preset::CustomTrig, n, lengths: vec![1.0; n], terms: Vec::new() }
    }

    fn build(preset: Preset, n: usize, terms: Vec<TrigTerm>) -> Result<Self> {
        let spec = Self { preset, n, lengths: vec![1.0; n], terms };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_lengths(mut self, lengths: &[f64]) -> Result<Self> {
        self.lengths = lengths.to_vec();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_DIM).contains(&self.n) || self.lengths.len() != self.n {
            return Err(WittenError::InvalidFunction(format!("dimension {} with {} lengths", self.n, self.lengths.len())));
        }
        if self.lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(WittenError::InvalidFunction("period lengths must be positive".into()));
        }
        if let Some(axis) = (0..self.n).find(|&i| !self.terms.iter().any(|t| t.axis == i)) {
            return Err(WittenError::InvalidFunction(format!("no term depends on axis {axis}")));
        }
        for t in &self.terms {
            if t.axis >= self.n {
                return Err(WittenError::InvalidFunction(format!("term on axis {} of a {}-torus", t.axis, self.n)));
            }
            if t.frequency == 0 {
                return Err(WittenError::InvalidFunction(format!("zero frequency on axis {}", t.axis)));
            }
            if t.amplitude == 0.0 || !t.amplitude.is_finite() || !t.phase.is_finite() {
                return Err(WittenError::InvalidFunction(format!("zero or non-finite amplitude on axis {}", t.axis)));
            }
        }
        Ok(())
    }

    /// Checks that the function's periods match the grid.
    pub fn check_grid(&self, grid: &TorusGrid) -> Result<()> {
        let same = grid.dim() == self.n
            && grid.lengths().iter().zip(&self.lengths).all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs());
        if same {
            Ok(())
        } else {
            Err(WittenError::InvalidFunction(format!(
                "function periods {:?} do not match grid lengths {:?}",
                self.lengths,
                grid.lengths()
            )))
        }
    }

    fn omega(&self, term: &TrigTerm) -> f64 {
        2.0 * PI * term.frequency as f64 / self.lengths[term.axis]
    }

    /// `g_i(x)`, `g_i'(x)`, `g_i''(x)` for one axis.
    pub fn axis_jet(&self, axis: usize, x: f64) -> (f64, f64, f64) {
        let mut jet = (0.0, 0.0, 0.0);
        for term in self.terms.iter().filter(|t| t.axis == axis) {
            let w = self.omega(term);
            let (s, c) = (w * x + term.phase).sin_cos();
            jet.0 += term.amplitude * c;
            jet.1 -= term.amplitude * w * s;
            jet.2 -= term.amplitude * w * w * c;
        }
        jet
    }

    pub fn axis_value(&self, axis: usize, x: f64) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.axis == axis)
            .map(|t| t.amplitude * (self.omega(t) * x + t.phase).cos())
            .sum()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (0..self.n).map(|i| self.axis_value(i, x[i])).sum()
    }

    pub fn gradient(&self, x: &[f64]) -> [f64; MAX_DIM] {
        let mut g = [0.0; MAX_DIM];
        for (i, gi) in g.iter_mut().enumerate().take(self.n) {
            *gi = self.axis_jet(i, x[i]).1;
        }
        g
    }

    /// Diagonal of the (diagonal) Hessian.
    pub fn hessian_diagonal(&self, x: &[f64]) -> [f64; MAX_DIM] {
        let mut h = [0.0; MAX_DIM];
        for (i, hi) in h.iter_mut().enumerate().take(self.n) {
            *hi = self.axis_jet(i, x[i]).2;
        }
        h
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.hessian_diagonal(x);
        DMatrix::from_fn(self.n, self.n, |i, j| if i == j { d[i] } else { 0.0 })
    }

    /// Upper bound on `sup |∇f|`.
    pub fn gradient_bound(&self) -> f64 {
        let mut per_axis = [0.0; MAX_DIM];
        for t in &self.terms {
            per_axis[t.axis] += t.amplitude.abs() * self.omega(t).abs();
        }
        per_axis.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Upper bound on `sup |∂_i² f|` over all axes.
    pub fn hessian_bound(&self) -> f64 {
        let mut per_axis = [0.0f64; MAX_DIM];
        for t in &self.terms {
            per_axis[t.axis] += t.amplitude.abs() * self.omega(t).powi(2);
        }
        per_axis.iter().fold(0.0, |m, v| m.max(*v))
    }

    /// `x ↦ −f(x + shift)`, still a separable trigonometric sum.
    pub fn negated_shifted(&self, shift: &[f64]) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| TrigTerm {
                axis: t.axis,
                amplitude: -t.amplitude,
                frequency: t.frequency,
                phase: t.phase + self.omega(t) * shift[t.axis],
            })
            .collect();
        Self { preset: Preset::CustomTrig, n: self.n, lengths: self.lengths.clone(), terms }
    }

    pub fn negated(&self) -> Self {
        let mut g = self.negated_shifted(&vec![0.0; self.n]);
        g.preset = self.preset;
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub coords: Vec<f64>,
    pub hessian_eigenvalues: Vec<f64>,
    pub index: usize,
    pub f_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorseProfile {
    pub m: Vec<usize>,
    pub points: Vec<CriticalPoint>,
}

/// Morse index as the number of strictly negative Hessian eigenvalues.
///
/// Eigenvalues within `1e-8 · max|H_ij|` of zero are reported as degenerate.
pub fn critical_index(hessian: &DMatrix<f64>) -> Result<usize> {
    let (eigs, _) = hessian_spectrum(hessian, &[])?;
    Ok(eigs.iter().filter(|&&e| e < 0.0).count())
}

fn hessian_spectrum(hessian: &DMatrix<f64>, coords: &[f64]) -> Result<(Vec<f64>, f64)> {
    if !hessian.is_square() {
        return Err(WittenError::InvalidArgument("Hessian must be square".into()));
    }
    let scale = hessian.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sym = (hessian + hessian.transpose()) * 0.5;
    let mut eigs: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(f64::total_cmp);
    let tol = DEGENERACY_RELTOL * scale;
    if scale == 0.0 || eigs.iter().any(|e| e.abs() <= tol) {
        return Err(WittenError::Degenerate { coords: coords.to_vec(), eigenvalues: eigs });
    }
    Ok((eigs, tol))
}

fn wrap(x: f64, l: f64) -> f64 {
    let w = x.rem_euclid(l);
    if w >= l || l - w < 1e-13 * l {
        0.0
    } else {
        w
    }
}

fn grad_norm(f: &MorseFunctionSpec, x: &[f64]) -> f64 {
    f.gradient(x)[..f.n].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Damped Newton on `∇f = 0`; returns the wrapped limit point if it converges.
fn newton(f: &MorseFunctionSpec, start: &[f64], tol: f64, max_step: f64) -> Option<Vec<f64>> {
    let n = f.n;
    let mut x = start.to_vec();
    let mut g = grad_norm(f, &x);
    for _ in 0..NEWTON_MAX_ITER {
        if g <= tol {
            return Some((0..n).map(|i| wrap(x[i], f.lengths[i])).collect());
        }
        let grad = f.gradient(&x);
        let rhs = nalgebra::DVector::from_fn(n, |i, _| -grad[i]);
        let step = f.hessian(&x).lu().solve(&rhs)?;
        let norm = step.norm();
        if !norm.is_finite() {
            return None;
        }
        let mut alpha = if norm > max_step { max_step / norm } else { 1.0 };
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = (0..n).map(|i| x[i] + alpha * step[i]).collect();
            let gt = grad_norm(f, &trial);
            if gt < g || gt <= tol {
                x = trial;
                g = gt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (g <= tol).then(|| (0..n).map(|i| wrap(x[i], f.lengths[i])).collect())
}

fn periodic_distance(a: &[f64], b: &[f64], lengths: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(lengths)
        .map(|((x, y), l)| {
            let d = (x - y).rem_euclid(*l);
            d.min(l - d).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

fn make_point(f: &MorseFunctionSpec, coords: Vec<f64>) -> Result<CriticalPoint> {
    let (eigs, _) = hessian_spectrum(&f.hessian(&coords), &coords)?;
    let index = eigs.iter().filter(|&&e| e < 0.0).count();
    Ok(CriticalPoint { f_value: f.value(&coords), hessian_eigenvalues: eigs, index, coords })
}

/// Locates all critical points by Newton from every grid vertex.
///
/// Converged points are sorted and merged within `min h / 2` modulo the
/// periods. Completeness is checked on every grid cell whose corners show a
/// sign change (or zero) in every gradient component: such a cell must be
/// within one cell diagonal of a known critical point, or a Newton run from
/// its centre must produce a new one.
pub fn find_critical_points(f: &MorseFunctionSpec, grid: &TorusGrid) -> Result<MorseProfile> {
    f.validate()?;
    f.check_grid(grid)?;
    let n = f.n;
    let h = grid.spacings();
    let dedup_radius = grid.min_spacing() / 2.0;
    let max_step = grid.min_spacing();

    let seeds: Vec<Vec<f64>> = (0..grid.vertex_count())
        .map(|v| grid.vertex_position(&grid.vertex_base(v))[..n].to_vec())
        .collect();
    let mut found: Vec<Vec<f64>> =
        seeds.par_iter().filter_map(|s| newton(f, s, NEWTON_TOL, max_step)).collect();
    found.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));

    let mut unique: Vec<Vec<f64>> = Vec::new();
    for p in found {
        if !unique.iter().any(|u| periodic_distance(u, &p, &f.lengths) <= dedup_radius) {
            unique.push(p);
        }
    }

    // completeness: flagged cells must be claimed
    let diag = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    let corners = 1usize << n;
    let mut extra = Vec::new();
    for v in 0..grid.vertex_count() {
        let base = grid.vertex_base(v);
        let origin = grid.vertex_position(&base);
        let mut lo = [f64::INFINITY; MAX_DIM];
        let mut hi = [f64::NEG_INFINITY; MAX_DIM];
        for c in 0..corners {
            let mut x = origin;
            for i in 0..n {
                if c & (1 << i) != 0 {
                    x[i] += h[i];
                }
            }
            let g = f.gradient(&x[..n]);
            for i in 0..n {
                lo[i] = lo[i].min(g[i]);
                hi[i] = hi[i].max(g[i]);
            }
        }
        if !(0..n).all(|i| lo[i] <= 0.0 && hi[i] >= 0.0) {
            continue;
        }
        let centre: Vec<f64> = (0..n).map(|i| origin[i] + 0.5 * h[i]).collect();
        let claimed = unique.iter().chain(&extra).any(|u| periodic_distance(u, &centre, &f.lengths) <= diag);
        if claimed {
            continue;
        }
        match newton(f, &centre, NEWTON_TOL, max_step / 2.0) {
            Some(p) if !unique.iter().chain(&extra).any(|u| periodic_distance(u, &p, &f.lengths) <= dedup_radius) => {
                extra.push(p)
            }
            Some(_) => {}
            None => {
                return Err(WittenError::CriticalSearch(format!(
                    "Newton failed from every seed of the flagged cell at {:?}",
                    &origin[..n]
                )))
            }
        }
    }
    unique.extend(extra);
    unique.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));

    let points = unique.into_iter().map(|c| make_point(f, c)).collect::<Result<Vec<_>>>()?;
    let mut m = vec![0; n + 1];
    for p in &points {
        m[p.index] += 1;
    }
    Ok(MorseProfile { m, points })
}

/// `m_q` per degree, with the Euler-characteristic self-check `Σ (−1)^q m_q = 0`.
pub fn morse_counts(profile: &MorseProfile) -> Result<Vec<usize>> {
    let chi: i64 = profile.m.iter().enumerate().map(|(q, &c)| if q % 2 == 0 { c as i64 } else { -(c as i64) }).sum();
    if chi != 0 {
        return Err(WittenError::Invariant(format!(
            "alternating sum of Morse counts {:?} is {chi}, but the torus has Euler characteristic 0",
            profile.m
        )));
    }
    Ok(profile.m.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn preset_derivatives_by_hand() {
        let g = MorseFunctionSpec::f1().gradient(&[0.25, 0.25]);
        assert_relative_eq!(g[0], -2.0 * PI, epsilon = 1e-12);
        assert_relative_eq!(g[1], -2.0 * PI, epsilon = 1e-12);
        let h = MorseFunctionSpec::f2().hessian(&[0.0, 0.0]);
        assert_relative_eq!(h[(0, 0)], -16.0 * PI * PI, epsilon = 1e-10);
        assert_relative_eq!(h[(1, 1)], -4.0 * PI * PI, epsilon = 1e-10);
        assert_eq!(h[(0, 1)], 0.0);
        assert!(MorseFunctionSpec::f3().gradient(&[0.0; 3]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_presets_rejected() {
        assert!(MorseFunctionSpec::cos_sum(&[0, 1], &[1.0, 1.0]).is_err());
        assert!(MorseFunctionSpec::cos_sum(&[1, 1], &[1.0, 0.0]).is_err());
        assert!(MorseFunctionSpec::cos_sum(&[1], &[1.0, 1.0]).is_err());
        let one_axis = vec![TrigTerm { axis: 0, amplitude: 1.0, frequency: 1, phase: 0.0 }];
        assert!(MorseFunctionSpec::custom_trig(2, one_axis).is_err());
    }

    #[test]
    fn index_examples() {
        assert_eq!(critical_index(&DMatrix::from_diagonal_element(2, 2, -1.0)).unwrap(), 2);
        let p2 = 4.0 * PI * PI;
        assert_eq!(critical_index(&DMatrix::from_row_slice(2, 2, &[-4.0 * p2, 0.0, 0.0, -p2])).unwrap(), 2);
        assert_eq!(critical_index(&DMatrix::from_row_slice(2, 2, &[4.0 * p2, 0.0, 0.0, -p2])).unwrap(), 1);
        assert!(matches!(
            critical_index(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-12])),
            Err(WittenError::Degenerate { .. })
        ));
    }

    #[test]
    fn f1_profile() {
        let grid = TorusGrid::uniform(2, 16).unwrap();
        let p = find_critical_points(&MorseFunctionSpec::f1(), &grid).unwrap();
        assert_eq!(p.m, vec![1, 2, 1]);
        let idx_at = |x: f64, y: f64| {
            p.points.iter().find(|c| periodic_distance(&c.coords, &[x, y], &[1.0, 1.0]) < 1e-10).unwrap().index
        };
        assert_eq!(idx_at(0.5, 0.5), 0);
        assert_eq!(idx_at(0.0, 0.5), 1);
        assert_eq!(idx_at(0.5, 0.0), 1);
        assert_eq!(idx_at(0.0, 0.0), 2);
        for c in &p.points {
            assert!(grad_norm(&MorseFunctionSpec::f1(), &c.coords) <= NEWTON_TOL);
        }
    }

    #[test]
    fn f2_and_f3_profiles() {
        let p2 = find_critical_points(&MorseFunctionSpec::f2(), &TorusGrid::uniform(2, 16).unwrap()).unwrap();
        assert_eq!(morse_counts(&p2).unwrap(), vec![2, 4, 2]);
        let p3 = find_critical_points(&MorseFunctionSpec::f3(), &TorusGrid::uniform(3, 8).unwrap()).unwrap();
        assert_eq!(morse_counts(&p3).unwrap(), vec![1, 3, 3, 1]);
    }

    #[test]
    fn degenerate_function_rejected() {
        // g(x) = cos 2πx + ¼ cos 4πx has g' = g'' = 0 at x = ½
        let f = MorseFunctionSpec::cos_sum_multi(&[vec![1, 2], vec![1]], &[vec![1.0, 0.25], vec![1.0]]).unwrap();
        let err = find_critical_points(&f, &TorusGrid::uniform(2, 8).unwrap()).unwrap_err();
        assert!(matches!(err, WittenError::Degenerate { .. }));
    }

    #[test]
    fn nonzero_euler_sum_is_rejected() {
        let profile = MorseProfile { m: vec![1, 0, 1], points: vec![] };
        assert!(morse_counts(&profile).is_err());
    }

    #[test]
    fn shifted_negation_matches_definition() {
        let f = MorseFunctionSpec::f2();
        let s = [0.03, 0.07];
        let g = f.negated_shifted(&s);
        for x in [[0.1, 0.2], [0.77, 0.41]] {
            assert_relative_eq!(g.value(&x), -f.value(&[x[0] + s[0], x[1] + s[1]]), epsilon = 1e-13);
        }
    }
}
