//! Exponentially small eigenvalues of `Δ_t^{(0)}` and `Δ_t^{(n)}` to full
//! relative precision.
//!
//! The low-lying eigenvalues of the Witten Laplacian on functions decay like
//! `e^{-2t·(barrier height)}` and quickly drop below the rounding floor
//! `ε·‖S‖` of any direct eigensolver. In ground-state variables `w = e^{tf}u`
//! the Rayleigh quotient becomes a weighted graph Dirichlet form
//!
//! `Σ_edges c_e (w_a − w_b)² / Σ_v B_v w_v²`,
//! `c_e = M_1 e^{-2t(f_e − f_min)}`, `B_v = M_0 e^{-2t(f_v − f_min)}`,
//!
//! whose low spectrum is captured by the harmonic extensions `Ψ_a` of the
//! discrete local minima `a`. Eliminating every non-minimum vertex with
//! positive-only pivots (pivot = sum of incident conductances) yields the
//! effective conductances between minima and the `Ψ_a` without cancellation,
//! so tiny eigenvalues keep their relative accuracy. The top degree reduces
//! to the same problem for `−f` on the dual grid.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Result, WittenError};
use crate::exterior::AxisSet;
use crate::morse::MorseFunctionSpec;
use crate::torus::{mass_matrix, CellId, TorusGrid, MAX_DIM};

/// Largest admissible `2t · (max φ − min φ)` before conductances underflow.
pub const RANGE_LIMIT: f64 = 700.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TunnelingSpectrum {
    pub q: usize,
    pub t: f64,
    /// Base multi-indices of the discrete local minima of the ground-state potential.
    pub minima: Vec<Vec<usize>>,
    /// Low-cluster eigenvalues, ascending; exactly `m` of them.
    pub values: Vec<f64>,
    /// Connected components of the effective-conductance graph.
    pub kernel_dim: usize,
    /// Effective conductances between minima (symmetric, zero diagonal).
    pub conductance: Vec<Vec<f64>>,
    /// `Ψᵀ B Ψ`.
    pub gram: Vec<Vec<f64>>,
}

impl TunnelingSpectrum {
    pub fn nonzero(&self) -> &[f64] {
        &self.values[self.kernel_dim..]
    }
}

/// Weighted graph in ground-state variables.
struct Network {
    resolutions: [usize; MAX_DIM],
    n: usize,
    potential: Vec<f64>,
    mass: Vec<f64>,
    /// `(a, b, conductance)` with `a`, `b` node indices.
    edges: Vec<(usize, usize, f64)>,
}

fn network(grid: &TorusGrid, f: &MorseFunctionSpec, t: f64, q: usize) -> Result<Network> {
    let n = grid.dim();
    if q != 0 && q != n {
        return Err(WittenError::DegreeOutOfRange { q, n });
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(WittenError::InvalidT(t));
    }
    f.check_grid(grid)?;
    let nv = grid.vertex_count();
    let sign = if q == 0 { 1.0 } else { -1.0 };
    let node_cells = grid.components(q)[0];
    let edge_deg = if q == 0 { 1 } else { n - 1 };
    let node_mass = mass_matrix(grid, q)?;
    let edge_mass = mass_matrix(grid, edge_deg)?;

    let phi_at = |cell: &CellId| sign * f.value(&grid.midpoint(cell)[..n]);
    let potential: Vec<f64> =
        (0..nv).map(|v| phi_at(&CellId { axes: node_cells, base: grid.vertex_base(v) })).collect();

    let mut raw_edges = Vec::with_capacity(n * nv);
    for j in 0..n {
        let axes = if q == 0 { AxisSet::from_axes(&[j]) } else { node_cells.remove(j) };
        let slot = grid.components(edge_deg).iter().position(|&c| c == axes).expect("edge component");
        for v in 0..nv {
            let base = grid.vertex_base(v);
            let phi = phi_at(&CellId { axes, base });
            let m = edge_mass.diagonal[slot * nv + v];
            let (a, b, weight) = if q == 0 {
                (v, grid.vertex_index(&grid.shifted(&base, j, 1)), m)
            } else {
                (grid.vertex_index(&grid.shifted(&base, j, -1)), v, 1.0 / m)
            };
            raw_edges.push((a, b, weight, phi));
        }
    }
    let lo = potential.iter().chain(raw_edges.iter().map(|e| &e.3)).fold(f64::INFINITY, |m, v| m.min(*v));
    let hi = potential.iter().chain(raw_edges.iter().map(|e| &e.3)).fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    if 2.0 * t * (hi - lo) > RANGE_LIMIT {
        return Err(WittenError::Overflow { exponent: 2.0 * t * (hi - lo), limit: RANGE_LIMIT });
    }
    let mass = potential
        .iter()
        .enumerate()
        .map(|(v, p)| {
            let m = node_mass.diagonal[v];
            let w = if q == 0 { m } else { 1.0 / m };
            w * (-2.0 * t * (p - lo)).exp()
        })
        .collect();
    let edges = raw_edges.into_iter().map(|(a, b, w, p)| (a, b, w * (-2.0 * t * (p - lo)).exp())).collect();
    let mut resolutions = [1; MAX_DIM];
    resolutions[..n].copy_from_slice(grid.resolutions());
    Ok(Network { resolutions, n, potential, mass, edges })
}

/// Position of `k` in the sequence `0, N−1, 1, N−2, …`; periodic neighbours
/// end up at most two places apart.
fn fold(k: usize, n: usize) -> usize {
    if k <= n - 1 - k {
        2 * k
    } else {
        2 * (n - 1 - k) + 1
    }
}

fn base_of(v: usize, res: &[usize; MAX_DIM], n: usize) -> [usize; MAX_DIM] {
    let mut base = [0; MAX_DIM];
    let mut idx = v;
    for i in (0..n).rev() {
        base[i] = idx % res[i];
        idx /= res[i];
    }
    base
}

fn folded_key(v: usize, res: &[usize; MAX_DIM], n: usize) -> usize {
    let base = base_of(v, res, n);
    let mut key = 0;
    for i in 0..n {
        key = key * res[i] + fold(base[i], res[i]);
    }
    key
}

/// Spectrum of the low cluster of `Δ_t^{(q)}` for `q ∈ {0, n}`.
pub fn tunneling_spectrum(grid: &TorusGrid, f: &MorseFunctionSpec, t: f64, q: usize) -> Result<TunnelingSpectrum> {
    let net = network(grid, f, t, q)?;
    let nv = net.potential.len();

    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for &(a, b, _) in &net.edges {
        neighbours[a].push(b);
        neighbours[b].push(a);
    }
    // strict local minima, ties broken by index
    let minima: Vec<usize> = (0..nv)
        .filter(|&v| {
            neighbours[v].iter().all(|&u| {
                let (pv, pu) = (net.potential[v], net.potential[u]);
                pv < pu || (pv == pu && v < u)
            })
        })
        .collect();
    let m = minima.len();
    let slot_of: Vec<Option<usize>> = {
        let mut s = vec![None; nv];
        for (i, &a) in minima.iter().enumerate() {
            s[a] = Some(i);
        }
        s
    };

    // elimination order: non-minima in folded lexicographic order
    let mut order: Vec<usize> = (0..nv).filter(|v| slot_of[*v].is_none()).collect();
    order.sort_by_key(|&v| folded_key(v, &net.resolutions, net.n));
    let mut pos = vec![usize::MAX; nv];
    for (p, &v) in order.iter().enumerate() {
        pos[v] = p;
    }
    let r = order.len();
    let mut bw = 1;
    for &(a, b, _) in &net.edges {
        if pos[a] != usize::MAX && pos[b] != usize::MAX {
            bw = bw.max(pos[a].abs_diff(pos[b]));
        }
    }

    // band[p * (bw+1) + d]: conductance between positions p and p+d
    let width = bw + 1;
    let mut band = vec![0.0f64; r * width];
    let mut to_min = vec![vec![0.0f64; r]; m];
    let mut between = vec![vec![0.0f64; m]; m];
    for &(a, b, c) in &net.edges {
        match (slot_of[a], slot_of[b]) {
            (None, None) => {
                let (p, s) = (pos[a].min(pos[b]), pos[a].max(pos[b]));
                if p != s {
                    band[p * width + (s - p)] += c;
                }
            }
            (Some(i), None) => to_min[i][pos[b]] += c,
            (None, Some(i)) => to_min[i][pos[a]] += c,
            (Some(i), Some(j)) => {
                if i != j {
                    between[i][j] += c;
                    between[j][i] += c;
                }
            }
        }
    }

    let mut pivots = vec![0.0f64; r];
    let mut row = Vec::with_capacity(width);
    for p in 0..r {
        row.clear();
        for d in 1..width.min(r - p) {
            let c = band[p * width + d];
            if c > 0.0 {
                row.push((d, c));
            }
        }
        let to_a: Vec<f64> = (0..m).map(|i| to_min[i][p]).collect();
        let pivot: f64 = row.iter().map(|x| x.1).sum::<f64>() + to_a.iter().sum::<f64>();
        pivots[p] = pivot;
        if pivot == 0.0 {
            continue;
        }
        for (x, &(d1, c1)) in row.iter().enumerate() {
            let scaled = c1 / pivot;
            for &(d2, c2) in &row[x + 1..] {
                band[(p + d1) * width + (d2 - d1)] += c2 * scaled;
            }
            for i in 0..m {
                if to_a[i] > 0.0 {
                    to_min[i][p + d1] += to_a[i] * scaled;
                }
            }
        }
        for i in 0..m {
            for j in (i + 1)..m {
                if to_a[i] > 0.0 && to_a[j] > 0.0 {
                    let add = to_a[i] * (to_a[j] / pivot);
                    between[i][j] += add;
                    between[j][i] += add;
                }
            }
        }
    }

    // harmonic extensions by back substitution: Ψ_i(p) = (Σ_d c Ψ_i(p+d) + c_{p,i}) / pivot
    let mut psi = vec![vec![0.0f64; r]; m];
    for p in (0..r).rev() {
        if pivots[p] == 0.0 {
            continue;
        }
        for (i, psi_i) in psi.iter_mut().enumerate() {
            let mut acc = to_min[i][p];
            for d in 1..width.min(r - p) {
                let c = band[p * width + d];
                if c > 0.0 {
                    acc += c * psi_i[p + d];
                }
            }
            psi_i[p] = acc / pivots[p];
        }
    }
    let mut gram = vec![vec![0.0f64; m]; m];
    for i in 0..m {
        for j in i..m {
            let mut s: f64 = (0..r).map(|p| net.mass[order[p]] * psi[i][p] * psi[j][p]).sum();
            if i == j {
                s += net.mass[minima[i]];
            }
            gram[i][j] = s;
            gram[j][i] = s;
        }
    }

    let kernel_dim = components(&between);
    let values = reduced_eigenvalues(&between, &gram, kernel_dim)?;
    let minima_idx = minima.iter().map(|&v| base_of(v, &net.resolutions, net.n)[..net.n].to_vec()).collect();
    Ok(TunnelingSpectrum { q, t, minima: minima_idx, values, kernel_dim, conductance: between, gram })
}

fn components(c: &[Vec<f64>]) -> usize {
    let m = c.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if c[i][j] > 0.0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    (0..m).filter(|&i| find(&mut parent, i) == i).count()
}

/// Eigenvalues of `K y = λ G y` where `K` is the Laplacian of the effective
/// conductances `c`. Two minima use the closed form, which keeps full
/// relative accuracy; larger clusters go through a Cholesky-reduced dense
/// solve with the `components` smallest values pinned to zero.
fn reduced_eigenvalues(c: &[Vec<f64>], g: &[Vec<f64>], components: usize) -> Result<Vec<f64>> {
    let m = c.len();
    match m {
        0 => Ok(Vec::new()),
        1 => Ok(vec![0.0]),
        2 => {
            let k = c[0][1];
            let (a, b, x) = (g[0][0], g[1][1], g[0][1]);
            let lambda = if k == 0.0 { 0.0 } else { k * (a + b + 2.0 * x) / (a * b - x * x) };
            let mut v = vec![0.0, lambda];
            v.sort_by(f64::total_cmp);
            Ok(v)
        }
        _ => {
            let kmat = DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    (0..m).filter(|&l| l != i).map(|l| c[i][l]).sum()
                } else {
                    -c[i][j]
                }
            });
            let gmat = DMatrix::from_fn(m, m, |i, j| g[i][j]);
            let chol = gmat
                .cholesky()
                .ok_or_else(|| WittenError::Invariant("reduced Gram matrix is not positive definite".into()))?;
            let linv = chol.l().try_inverse().ok_or_else(|| WittenError::Invariant("singular Cholesky factor".into()))?;
            let reduced = &linv * kmat * linv.transpose();
            let sym = (&reduced + reduced.transpose()) * 0.5;
            let mut v: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
            v.sort_by(f64::total_cmp);
            for x in v.iter_mut().take(components) {
                *x = 0.0;
            }
            Ok(v)
        }
    }
}
