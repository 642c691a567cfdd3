//! Smallest eigenpairs of symmetric positive semidefinite operators.
//!
//! The iterative solver is a thick-restart block Krylov method on the
//! spectrally flipped operator `σI − S`, with `σ` the Gershgorin bound of `S`:
//! the smallest eigenvalues of `S` become the largest of `σI − S`, so no linear
//! solves are needed. Each expansion block is built from the Ritz residuals of
//! the wanted pairs (which span the next block Lanczos direction), the basis is
//! kept orthonormal by block classical Gram–Schmidt applied twice, and
//! Rayleigh–Ritz uses the explicitly projected matrix `Vᵀ(σI − S)V`.
//!
//! Every inner product is evaluated sequentially; parallelism is only across
//! independent vectors and matrix rows, so results do not depend on the thread
//! count.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WittenError};
use crate::sparse::CsrMatrix;

/// Largest dimension accepted by the dense oracle.
pub const DENSE_LIMIT: usize = 4096;
/// Kernel cut relative to the Gershgorin scale.
pub const KERNEL_RELTOL: f64 = 1e-10;
/// Below this dimension the iterative solver hands over to the dense path.
const DIRECT_BELOW: usize = 96;

pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Upper bound on the spectral radius.
    fn norm_bound(&self) -> f64;
    fn entry(&self, i: usize, j: usize) -> f64;

    fn to_dense(&self) -> Mat<f64> {
        let n = self.dim();
        Mat::from_fn(n, n, |i, j| self.entry(i, j))
    }
}

impl SymmetricOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }

    fn norm_bound(&self) -> f64 {
        self.gershgorin_bound()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }

    fn to_dense(&self) -> Mat<f64> {
        let n = self.nrows();
        let mut m = Mat::zeros(n, n);
        for r in 0..n {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }
}

impl SymmetricOperator for Mat<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        y.par_iter_mut().enumerate().for_each(|(i, out)| {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self[(i, j)] * x[j];
            }
            *out = acc;
        });
    }

    fn norm_bound(&self) -> f64 {
        (0..self.nrows())
            .map(|i| (0..self.ncols()).map(|j| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self[(i, j)]
    }

    fn to_dense(&self) -> Mat<f64> {
        self.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRequest {
    pub q: usize,
    pub t: f64,
    pub k: usize,
    /// Residual tolerance relative to the operator scale.
    pub tol: f64,
    /// Cap on block expansions.
    pub max_iter: usize,
    pub seed: u64,
    pub want_vectors: bool,
}

impl SpectrumRequest {
    pub fn new(k: usize) -> Self {
        Self { q: 0, t: 0.0, k, tol: 1e-8, max_iter: 4000, seed: 42, want_vectors: false }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_vectors(mut self) -> Self {
        self.want_vectors = true;
        self
    }

    pub fn at(mut self, q: usize, t: f64) -> Self {
        self.q = q;
        self.t = t;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigResult {
    pub values: Vec<f64>,
    /// `‖S v − λ v‖` for unit `v`, recomputed after the solve.
    pub residuals: Vec<f64>,
    #[serde(skip)]
    pub vectors: Option<Vec<Vec<f64>>>,
    pub converged: Vec<bool>,
    /// Gershgorin bound used as the spectral scale.
    pub scale: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl EigResult {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapAnalysis {
    pub kernel_dim: usize,
    pub low_count: usize,
    pub threshold_used: f64,
    pub gap_ratio: f64,
    /// False when every consecutive ratio is below 10.
    pub clear: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelDimension {
    pub dim: usize,
    pub cut: f64,
    /// False when the next eigenvalue is within 100× of the cut (or unknown).
    pub separated: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthonormalizes the columns of `w` against `basis[:, ..m]` (two block
/// classical Gram–Schmidt passes) and returns the projection coefficients.
fn project_out(basis: &Mat<f64>, m: usize, w: &mut Mat<f64>) -> Mat<f64> {
    let bb = w.ncols();
    let mut coeffs = Mat::<f64>::zeros(m, bb);
    if m == 0 {
        return coeffs;
    }
    let v = basis.subcols(0, m);
    for _ in 0..2 {
        let mut c = Mat::<f64>::zeros(m, bb);
        matmul(c.as_mut(), Accum::Replace, v.transpose(), w.as_ref(), 1.0, Par::Seq);
        matmul(w.as_mut(), Accum::Add, v, c.as_ref(), -1.0, Par::Seq);
        coeffs += &c;
    }
    coeffs
}

/// Thin QR of the (already basis-orthogonal) block `w` by twice-applied
/// modified Gram–Schmidt. Collapsed columns are replaced by fresh random
/// directions with a zero diagonal entry in `R`.
fn block_qr(basis: &Mat<f64>, m: usize, w: &mut Mat<f64>, floor: f64, rng: &mut ChaCha8Rng) -> Mat<f64> {
    let n = w.nrows();
    let bb = w.ncols();
    let mut r = Mat::<f64>::zeros(bb, bb);
    for i in 0..bb {
        for _ in 0..2 {
            for j in 0..i {
                let c = dot(w.col_as_slice(j), w.col_as_slice(i));
                r[(j, i)] += c;
                let (qj, wi) = two_cols(w, j, i);
                wi.iter_mut().zip(qj).for_each(|(a, b)| *a -= c * b);
            }
        }
        let mut nrm = norm(w.col_as_slice(i));
        if nrm <= floor {
            // invariant subspace reached: continue with a random direction
            let mut fresh = Mat::<f64>::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
            project_out(basis, m, &mut fresh);
            for _ in 0..2 {
                for j in 0..i {
                    let c = dot(w.col_as_slice(j), fresh.col_as_slice(0));
                    fresh.col_as_slice_mut(0).iter_mut().zip(w.col_as_slice(j)).for_each(|(a, b)| *a -= c * b);
                }
            }
            let fn_ = norm(fresh.col_as_slice(0));
            w.col_as_slice_mut(i).iter_mut().zip(fresh.col_as_slice(0)).for_each(|(a, b)| *a = b / fn_);
            nrm = 0.0;
        } else {
            w.col_as_slice_mut(i).iter_mut().for_each(|a| *a /= nrm);
        }
        r[(i, i)] = nrm;
    }
    r
}

fn two_cols(w: &mut Mat<f64>, j: usize, i: usize) -> (&[f64], &mut [f64]) {
    debug_assert!(j < i);
    let n = w.nrows();
    let (left, right) = w.as_mut().split_at_col_mut(i);
    let qj = left.col(j).try_as_col_major().expect("contiguous column").as_slice();
    let wi = right.col_mut(0).try_as_col_major_mut().expect("contiguous column").as_slice_mut();
    debug_assert_eq!(qj.len(), n);
    (qj, wi)
}

/// The `k` smallest eigenpairs of a symmetric PSD operator.
///
/// Pairs whose residual `‖Sv − λv‖` falls below `tol · scale` are marked
/// converged. Running out of `max_iter` returns the current Ritz pairs with
/// the unconverged ones flagged.
pub fn smallest_eigs<O: SymmetricOperator + ?Sized>(op: &O, req: &SpectrumRequest) -> Result<EigResult> {
    let n = op.dim();
    if req.k == 0 || req.k >= n {
        return Err(WittenError::InvalidRequest(format!("k = {} must lie in 1..{n}", req.k)));
    }
    if !(req.tol > 0.0 && req.tol.is_finite()) {
        return Err(WittenError::InvalidRequest(format!("tolerance {} must be positive", req.tol)));
    }
    let scale = op.norm_bound();
    let k = req.k;
    let nev = k + (k / 2).max(4);
    if n < DIRECT_BELOW || 8 * nev > n {
        if n > DENSE_LIMIT {
            return Err(WittenError::InvalidRequest(format!("k = {k} is too large for an iterative solve of dimension {n}")));
        }
        return direct_smallest(op, req, scale);
    }
    if scale == 0.0 {
        let vectors = req.want_vectors.then(|| {
            (0..k).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
        });
        return Ok(EigResult {
            values: vec![0.0; k],
            residuals: vec![0.0; k],
            converged: vec![true; k],
            vectors,
            scale,
            iterations: 0,
            seed: req.seed,
        });
    }

    let sigma = scale;
    let block = nev;
    let max_basis = (6 * nev).max(60).min(n - block);
    let keep = (2 * nev).max(max_basis / 2).min(max_basis - block);
    let target = req.tol * scale;
    let floor = 1e-13 * sigma;

    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let mut basis = Mat::<f64>::zeros(n, max_basis + block);
    let mut h = DMatrix::<f64>::zeros(max_basis + block, max_basis + block);

    let mut start = Mat::<f64>::from_fn(n, block, |_, _| rng.random_range(-1.0..1.0));
    block_qr(&basis, 0, &mut start, 0.0, &mut rng);
    basis.subcols_mut(0, block).copy_from(&start);
    let mut m = block;
    let mut active = 0;
    let mut iterations = 0;

    let (thetas, ys) = loop {
        let bb = m - active;
        let mut w = Mat::<f64>::zeros(n, bb);
        for c in 0..bb {
            let x = basis.col_as_slice(active + c);
            let y = w.col_as_slice_mut(c);
            op.apply(x, y);
            y.iter_mut().zip(x).for_each(|(yi, xi)| *yi = sigma * xi - *yi);
        }
        let coeffs = project_out(&basis, m, &mut w);
        for c in 0..bb {
            for i in 0..m {
                h[(i, active + c)] = coeffs[(i, c)];
                h[(active + c, i)] = coeffs[(i, c)];
            }
        }
        for a in 0..bb {
            for c in (a + 1)..bb {
                let s = 0.5 * (coeffs[(active + a, c)] + coeffs[(active + c, a)]);
                h[(active + a, active + c)] = s;
                h[(active + c, active + a)] = s;
            }
        }
        let r = block_qr(&basis, m, &mut w, floor, &mut rng);
        iterations += 1;

        let eig = h.view((0, 0), (m, m)).into_owned().symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let residual = |col: usize| -> f64 {
            let mut s = 0.0;
            for a in 0..bb {
                let mut acc = 0.0;
                for c in 0..bb {
                    acc += r[(a, c)] * eig.eigenvectors[(active + c, col)];
                }
                s += acc * acc;
            }
            s.sqrt()
        };
        let wanted = k.min(m);
        let done = m >= k && order[..wanted].iter().all(|&c| residual(c) <= target);
        if done || iterations >= req.max_iter || m + bb > n {
            let thetas: Vec<f64> = order[..wanted].iter().map(|&c| eig.eigenvalues[c]).collect();
            let ys = Mat::<f64>::from_fn(m, wanted, |i, j| eig.eigenvectors[(i, order[j])]);
            break (thetas, ys);
        }

        if m + bb > max_basis {
            let kept = keep.min(m);
            let y = Mat::<f64>::from_fn(m, kept, |i, j| eig.eigenvectors[(i, order[j])]);
            let mut rotated = Mat::<f64>::zeros(n, kept);
            matmul(rotated.as_mut(), Accum::Replace, basis.subcols(0, m), y.as_ref(), 1.0, Par::Seq);
            basis.subcols_mut(0, kept).copy_from(&rotated);
            h.fill(0.0);
            for (j, &c) in order[..kept].iter().enumerate() {
                h[(j, j)] = eig.eigenvalues[c];
            }
            for a in 0..bb {
                for j in 0..kept {
                    let mut acc = 0.0;
                    for c in 0..bb {
                        acc += r[(a, c)] * y[(active + c, j)];
                    }
                    h[(kept + a, j)] = acc;
                    h[(j, kept + a)] = acc;
                }
            }
            basis.subcols_mut(kept, bb).copy_from(&w);
            active = kept;
            m = kept + bb;
        } else {
            basis.subcols_mut(m, bb).copy_from(&w);
            for a in 0..bb {
                for c in 0..bb {
                    h[(m + a, active + c)] = r[(a, c)];
                    h[(active + c, m + a)] = r[(a, c)];
                }
            }
            active = m;
            m += bb;
        }
    };

    let wanted = thetas.len();
    let mut x = Mat::<f64>::zeros(n, wanted);
    matmul(x.as_mut(), Accum::Replace, basis.subcols(0, ys.nrows()), ys.as_ref(), 1.0, Par::Seq);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..wanted)
        .map(|j| {
            let mut v = x.col_as_slice(j).to_vec();
            let nv = norm(&v);
            v.iter_mut().for_each(|e| *e /= nv);
            (sigma - thetas[j], v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    finish(op, req, scale, pairs, iterations)
}

fn finish<O: SymmetricOperator + ?Sized>(
    op: &O,
    req: &SpectrumRequest,
    scale: f64,
    pairs: Vec<(f64, Vec<f64>)>,
    iterations: usize,
) -> Result<EigResult> {
    let n = op.dim();
    let residuals: Vec<f64> = pairs
        .par_iter()
        .map(|(lambda, x)| {
            let mut y = vec![0.0; n];
            op.apply(x, &mut y);
            norm(&y.iter().zip(x).map(|(a, b)| a - lambda * b).collect::<Vec<_>>())
        })
        .collect();
    let target = req.tol * scale;
    let converged = residuals.iter().map(|&r| r <= target).collect();
    let values = pairs.iter().map(|p| p.0).collect();
    let vectors = req.want_vectors.then(|| pairs.into_iter().map(|p| p.1).collect());
    Ok(EigResult { values, residuals, vectors, converged, scale, iterations, seed: req.seed })
}

fn direct_smallest<O: SymmetricOperator + ?Sized>(op: &O, req: &SpectrumRequest, scale: f64) -> Result<EigResult> {
    let (values, vectors) = dense_eigen(op)?;
    let pairs = (0..req.k)
        .map(|i| (values[i], (0..op.dim()).map(|r| vectors[(r, i)]).collect()))
        .collect();
    finish(op, req, scale, pairs, 0)
}

/// All eigenvalues, ascending, by dense symmetric eigendecomposition.
pub fn dense_spectrum_oracle<O: SymmetricOperator + ?Sized>(op: &O) -> Result<Vec<f64>> {
    let n = op.dim();
    if n > DENSE_LIMIT {
        return Err(WittenError::TooLarge { dim: n, limit: DENSE_LIMIT });
    }
    let a = op.to_dense();
    let mut values = a
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| WittenError::Invariant(format!("dense eigensolver failed: {e:?}")))?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Full dense eigendecomposition: ascending values and eigenvector columns.
pub fn dense_eigen<O: SymmetricOperator + ?Sized>(op: &O) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = op.dim();
    if n > DENSE_LIMIT {
        return Err(WittenError::TooLarge { dim: n, limit: DENSE_LIMIT });
    }
    let a = op.to_dense();
    let evd = a
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| WittenError::Invariant(format!("dense eigensolver failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let values = order.iter().map(|&i| s[i]).collect();
    let u = evd.U();
    let vectors = Mat::from_fn(n, n, |r, c| u[(r, order[c])]);
    Ok((values, vectors))
}

/// `#{λ_i ≤ threshold}`; an unconverged value within 10% of the threshold
/// makes the count inconclusive.
pub fn count_below(result: &EigResult, threshold: f64) -> Result<usize> {
    for (v, &ok) in result.values.iter().zip(&result.converged) {
        if !ok && (v - threshold).abs() <= 0.1 * threshold.abs() {
            return Err(WittenError::InconclusiveCount { value: *v, threshold });
        }
    }
    Ok(result.values.iter().filter(|&&v| v <= threshold).count())
}

/// Number of eigenvalues at or below `KERNEL_RELTOL · scale`.
pub fn kernel_dimension(values: &[f64], scale: f64) -> KernelDimension {
    let cut = KERNEL_RELTOL * scale;
    let dim = values.iter().filter(|&&v| v <= cut).count();
    let separated = values.get(dim).is_some_and(|&next| next >= 100.0 * cut);
    KernelDimension { dim, cut, separated }
}

/// Locates the largest relative jump among the first `k_max + 1` values.
pub fn detect_gap(values: &[f64], k_max: usize, scale: f64) -> Result<GapAnalysis> {
    if values.len() < 2 {
        return Err(WittenError::InvalidRequest("gap detection needs at least two values".into()));
    }
    let floor = f64::EPSILON * scale.abs().max(f64::MIN_POSITIVE);
    let last = k_max.min(values.len() - 1).max(1);
    let mut best = (1, 0.0f64);
    for i in 1..=last {
        let ratio = values[i] / values[i - 1].max(floor);
        if ratio > best.1 {
            best = (i, ratio);
        }
    }
    let (low_count, gap_ratio) = best;
    let threshold_used = (values[low_count - 1].max(floor) * values[low_count]).sqrt();
    Ok(GapAnalysis {
        kernel_dim: kernel_dimension(values, scale).dim.min(low_count),
        low_count,
        threshold_used,
        gap_ratio,
        clear: gap_ratio >= 10.0,
    })
}
