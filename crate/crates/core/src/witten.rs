//! Deformed complex `d_t = e^{-tf} d e^{tf}` and the Witten Laplacians.
//!
//! The coboundary is conjugated by the diagonal weights `e^{t f(m)}` evaluated
//! at cell midpoints, so `d_t² = 0` holds up to rounding. Laplacians are
//! exposed in mass-symmetrized form `S_q = M_q^{1/2} Δ_q M_q^{-1/2}`, assembled
//! as `D_{q-1} D_{q-1}ᵀ + D_qᵀ D_q` with `D_q = M_{q+1}^{1/2} d_t M_q^{-1/2}`,
//! which makes them exactly symmetric.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Result, WittenError};
use crate::exterior::{commutator_coefficient, AxisSet};
use crate::morse::MorseFunctionSpec;
use crate::sparse::CsrMatrix;
use crate::torus::{coboundary, mass_matrix, MassMatrix, TorusGrid};

/// Largest admissible `t · |f(m_τ) − f(m_σ)|`.
pub const EXPONENT_LIMIT: f64 = 700.0;

/// `f` at the midpoints of all `q`-cells, in enumeration order.
pub fn cell_values(grid: &TorusGrid, f: &MorseFunctionSpec, q: usize) -> Result<Vec<f64>> {
    Ok(grid
        .enumerate_cells(q)?
        .iter()
        .map(|c| f.value(&grid.midpoint(c)[..grid.dim()]))
        .collect())
}

/// Conjugates `d_q` by midpoint weights: entry `(σ, τ)` becomes
/// `d_{στ} · exp(t (f(m_τ) − f(m_σ)))`.
pub fn deform_coboundary(grid: &TorusGrid, d_q: &CsrMatrix, q: usize, f: &MorseFunctionSpec, t: f64) -> Result<CsrMatrix> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(WittenError::InvalidT(t));
    }
    if t == 0.0 || d_q.nrows() == 0 {
        return Ok(d_q.clone());
    }
    let lower = cell_values(grid, f, q)?;
    let upper = cell_values(grid, f, q + 1)?;
    let mut worst = 0.0f64;
    for r in 0..d_q.nrows() {
        for (c, _) in d_q.row(r) {
            worst = worst.max(t * (lower[c] - upper[r]).abs());
        }
    }
    if worst > EXPONENT_LIMIT {
        return Err(WittenError::Overflow { exponent: worst, limit: EXPONENT_LIMIT });
    }
    Ok(d_q.map_values(|r, c, v| v * (t * (lower[c] - upper[r])).exp()))
}

/// `M_q^{-1} opᵀ M_{q+1}`: the adjoint of `op` under the mass inner products.
pub fn adjoint_operator(op: &CsrMatrix, m_q: &MassMatrix, m_q1: &MassMatrix) -> Result<CsrMatrix> {
    if op.ncols() != m_q.diagonal.len() || op.nrows() != m_q1.diagonal.len() {
        return Err(WittenError::InvalidArgument(format!(
            "operator is {}×{} but masses have sizes {} and {}",
            op.nrows(),
            op.ncols(),
            m_q1.diagonal.len(),
            m_q.diagonal.len()
        )));
    }
    let left: Vec<f64> = m_q.diagonal.iter().map(|m| 1.0 / m).collect();
    Ok(op.transpose().scale(&left, &m_q1.diagonal))
}

#[derive(Clone, Debug)]
pub struct DeformedComplex {
    pub grid: TorusGrid,
    pub f: MorseFunctionSpec,
    pub t: f64,
    /// Undeformed coboundaries `d_q`, `q = 0..=n` (the last one has no rows).
    pub d: Vec<CsrMatrix>,
    /// Deformed coboundaries `d_t^{(q)}`.
    pub d_t: Vec<CsrMatrix>,
    pub mass: Vec<MassMatrix>,
    /// `M_{q+1}^{1/2} d_t^{(q)} M_q^{-1/2}`.
    pub sym_d: Vec<CsrMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OperatorStats {
    pub q: usize,
    pub dim: usize,
    pub nnz: usize,
    pub symmetry_residual: f64,
    pub gershgorin_bound: f64,
}

impl DeformedComplex {
    pub fn new(grid: &TorusGrid, f: &MorseFunctionSpec, t: f64) -> Result<Self> {
        f.check_grid(grid)?;
        let n = grid.dim();
        let mut d = Vec::with_capacity(n + 1);
        let mut d_t = Vec::with_capacity(n + 1);
        let mut mass = Vec::with_capacity(n + 1);
        for q in 0..=n {
            let dq = coboundary(grid, q)?;
            d_t.push(deform_coboundary(grid, &dq, q, f, t)?);
            d.push(dq);
            mass.push(mass_matrix(grid, q)?);
        }
        let mut sym_d = Vec::with_capacity(n + 1);
        for q in 0..=n {
            let left = if q < n { mass[q + 1].sqrt() } else { Vec::new() };
            sym_d.push(d_t[q].scale(&left, &mass[q].inv_sqrt()));
        }
        Ok(Self { grid: *grid, f: f.clone(), t, d, d_t, mass, sym_d })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// `M_q^{-1} d_t^{(q)ᵀ} M_{q+1}`.
    pub fn adjoint(&self, q: usize) -> Result<CsrMatrix> {
        if q >= self.dim() {
            return Err(WittenError::DegreeOutOfRange { q, n: self.dim() });
        }
        adjoint_operator(&self.d_t[q], &self.mass[q], &self.mass[q + 1])
    }

    pub fn stats(&self, q: usize) -> Result<OperatorStats> {
        let s = witten_laplacian(self, q)?;
        Ok(OperatorStats {
            q,
            dim: s.nrows(),
            nnz: s.nnz(),
            symmetry_residual: s.symmetry_residual(),
            gershgorin_bound: s.gershgorin_bound(),
        })
    }
}

/// Symmetrized Witten Laplacian `S_q = D_{q-1} D_{q-1}ᵀ + D_qᵀ D_q`.
pub fn witten_laplacian(cx: &DeformedComplex, q: usize) -> Result<CsrMatrix> {
    let n = cx.dim();
    if q > n {
        return Err(WittenError::DegreeOutOfRange { q, n });
    }
    let up = cx.sym_d[q].gram();
    Ok(if q == 0 { up } else { cx.sym_d[q - 1].outer_gram().add(&up) })
}

/// `Δ_t = M^{-1/2} S M^{1/2}`, self-adjoint in the mass inner product.
pub fn raw_laplacian(cx: &DeformedComplex, q: usize) -> Result<CsrMatrix> {
    let s = witten_laplacian(cx, q)?;
    Ok(s.scale(&cx.mass[q].inv_sqrt(), &cx.mass[q].sqrt()))
}

/// Coefficient of `dx_{J'}` in `[dx_l∧, ι_k] dx_J`.
pub fn hessian_coupling_coefficient(j: AxisSet, j_out: AxisSet, l: usize, k: usize) -> i32 {
    commutator_coefficient(j, j_out, l, k)
}

/// Zeroth-order terms of the Bochner expansion, sampled at vertices.
#[derive(Clone, Debug)]
pub struct BochnerTerms {
    pub q: usize,
    /// `t² |df|²` per vertex.
    pub potential: Vec<f64>,
    /// `t Σ_{l,k} ∂_l∂_k f · [dx_l∧, ι_k]` per vertex, in the `dx_J` basis.
    pub coupling: Vec<DMatrix<f64>>,
}

fn coupling_block(hess: &DMatrix<f64>, comps: &[AxisSet]) -> DMatrix<f64> {
    let n = hess.nrows();
    DMatrix::from_fn(comps.len(), comps.len(), |a, b| {
        let mut s = 0.0;
        for l in 0..n {
            for k in 0..n {
                let c = commutator_coefficient(comps[b], comps[a], l, k);
                if c != 0 {
                    s += hess[(l, k)] * c as f64;
                }
            }
        }
        s
    })
}

pub fn bochner_terms(cx: &DeformedComplex, q: usize) -> Result<BochnerTerms> {
    let grid = &cx.grid;
    let n = grid.dim();
    if q > n {
        return Err(WittenError::DegreeOutOfRange { q, n });
    }
    let comps = grid.components(q);
    let t = cx.t;
    let mut potential = Vec::with_capacity(grid.vertex_count());
    let mut coupling = Vec::with_capacity(grid.vertex_count());
    for v in 0..grid.vertex_count() {
        let x = grid.vertex_position(&grid.vertex_base(v));
        let g = cx.f.gradient(&x[..n]);
        potential.push(t * t * g.iter().map(|c| c * c).sum::<f64>());
        coupling.push(coupling_block(&cx.f.hessian(&x[..n]), &comps) * t);
    }
    Ok(BochnerTerms { q, potential, coupling })
}

/// Bochner-form assembly `S(t=0) + t²|df|² + t·(Hessian coupling)`, symmetrized.
///
/// The zeroth-order blocks act on components at a vertex; because the mass
/// weights and cell volumes cancel, they carry over to the symmetrized
/// variables unchanged.
pub fn bochner_laplacian(cx: &DeformedComplex, q: usize) -> Result<CsrMatrix> {
    let grid = &cx.grid;
    let undeformed = DeformedComplex::new(grid, &cx.f, 0.0)?;
    let base = witten_laplacian(&undeformed, q)?;
    let terms = bochner_terms(cx, q)?;
    let nv = grid.vertex_count();
    let ncomp = grid.components(q).len();
    let mut triplets = Vec::with_capacity(nv * ncomp * ncomp);
    for v in 0..nv {
        let block = &terms.coupling[v];
        for a in 0..ncomp {
            for b in 0..ncomp {
                let mut val = block[(a, b)];
                if a == b {
                    val += terms.potential[v];
                }
                if val != 0.0 {
                    triplets.push((a * nv + v, b * nv + v, val));
                }
            }
        }
    }
    let zeroth = CsrMatrix::from_triplets(base.nrows(), base.ncols(), &triplets);
    Ok(base.add(&zeroth))
}

/// Symbol of `df∧ ι_{df} + ι_{df} df∧` on `q`-forms, from wedge/contraction rules.
pub fn symbol_anticommutator(grad: &[f64], n: usize, q: usize) -> DMatrix<f64> {
    let comps = crate::exterior::subsets(n, q);
    let pos = |j: AxisSet| comps.iter().position(|&c| c == j);
    let mut m = DMatrix::zeros(comps.len(), comps.len());
    for (b, &j) in comps.iter().enumerate() {
        for l in 0..n {
            for k in 0..n {
                let w = grad[l] * grad[k];
                if let Some((s1, a)) = j.contract(k) {
                    if let Some((s2, out)) = a.wedge(l) {
                        m[(pos(out).unwrap(), b)] += w * (s1 * s2) as f64;
                    }
                }
                if let Some((s1, a)) = j.wedge(l) {
                    if let Some((s2, out)) = a.contract(k) {
                        m[(pos(out).unwrap(), b)] += w * (s1 * s2) as f64;
                    }
                }
            }
        }
    }
    m
}
