//! Periodic cubical complex on the flat torus `T^n = ∏ R/L_i Z`.
//!
//! A `q`-cell is an axis subset `J` (`|J| = q`) together with a base vertex
//! `k`; it spans `[k_j h_j, (k_j+1) h_j]` along every `j ∈ J` and sits at
//! `k_i h_i` along the other axes. Cochain values are integrated quantities
//! (component × `∏_{j∈J} h_j`), so the coboundary is the bare signed incidence
//! matrix and all metric information lives in the diagonal mass matrices.

use crate::error::{Result, WittenError};
use crate::exterior::{binomial, subsets, AxisSet};
use crate::sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

pub const MAX_DIM: usize = 3;
pub const MIN_RESOLUTION: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    n: usize,
    lengths: [f64; MAX_DIM],
    resolutions: [usize; MAX_DIM],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CellId {
    pub axes: AxisSet,
    pub base: [usize; MAX_DIM],
}

impl CellId {
    pub fn degree(&self) -> usize {
        self.axes.len()
    }
}

/// Discrete `q`-form: one integrated value per `q`-cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Cochain {
    pub grid: TorusGrid,
    pub q: usize,
    pub values: Vec<f64>,
}

/// Diagonal discrete Hodge inner product `(u, v) = uᵀ M v`.
#[derive(Clone, Debug, PartialEq)]
pub struct MassMatrix {
    pub q: usize,
    pub diagonal: Vec<f64>,
}

impl MassMatrix {
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.diagonal.iter().zip(u).zip(v).map(|((m, a), b)| m * a * b).sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    pub fn sqrt(&self) -> Vec<f64> {
        self.diagonal.iter().map(|m| m.sqrt()).collect()
    }

    pub fn inv_sqrt(&self) -> Vec<f64> {
        self.diagonal.iter().map(|m| 1.0 / m.sqrt()).collect()
    }
}

pub fn build_grid(n: usize, lengths: &[f64], resolutions: &[usize]) -> Result<TorusGrid> {
    if !(1..=MAX_DIM).contains(&n) {
        return Err(WittenError::InvalidGrid(format!("dimension {n} outside 1..={MAX_DIM}")));
    }
    if lengths.len() != n || resolutions.len() != n {
        return Err(WittenError::InvalidGrid(format!(
            "expected {n} lengths and resolutions, got {} and {}",
            lengths.len(),
            resolutions.len()
        )));
    }
    let mut grid = TorusGrid { n, lengths: [1.0; MAX_DIM], resolutions: [1; MAX_DIM] };
    for i in 0..n {
        if !(lengths[i].is_finite() && lengths[i] > 0.0) {
            return Err(WittenError::InvalidGrid(format!("length {} along axis {i} is not positive", lengths[i])));
        }
        if resolutions[i] < MIN_RESOLUTION {
            return Err(WittenError::InvalidGrid(format!(
                "resolution {} along axis {i} is below {MIN_RESOLUTION}",
                resolutions[i]
            )));
        }
        grid.lengths[i] = lengths[i];
        grid.resolutions[i] = resolutions[i];
    }
    Ok(grid)
}

impl TorusGrid {
    /// Unit-period cube grid with the same resolution on every axis.
    pub fn uniform(n: usize, resolution: usize) -> Result<Self> {
        build_grid(n, &vec![1.0; n], &vec![resolution; n])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.n]
    }

    pub fn resolutions(&self) -> &[usize] {
        &self.resolutions[..self.n]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.resolutions[axis] as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.spacing(i)).collect()
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.n).map(|i| self.spacing(i)).fold(f64::INFINITY, f64::min)
    }

    pub fn vertex_count(&self) -> usize {
        self.resolutions().iter().product()
    }

    pub fn cell_count(&self, q: usize) -> usize {
        binomial(self.n, q) * self.vertex_count()
    }

    fn check_degree(&self, q: usize) -> Result<()> {
        if q > self.n {
            Err(WittenError::DegreeOutOfRange { q, n: self.n })
        } else {
            Ok(())
        }
    }

    /// Axis subsets of size `q` in enumeration order.
    pub fn components(&self, q: usize) -> Vec<AxisSet> {
        subsets(self.n, q)
    }

    pub fn vertex_index(&self, base: &[usize; MAX_DIM]) -> usize {
        let mut idx = 0;
        for i in 0..self.n {
            idx = idx * self.resolutions[i] + base[i];
        }
        idx
    }

    pub fn vertex_base(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut base = [0; MAX_DIM];
        for i in (0..self.n).rev() {
            base[i] = idx % self.resolutions[i];
            idx /= self.resolutions[i];
        }
        base
    }

    /// Base index shifted by `delta` along `axis`, with periodic wraparound.
    pub fn shifted(&self, base: &[usize; MAX_DIM], axis: usize, delta: isize) -> [usize; MAX_DIM] {
        let mut b = *base;
        let n = self.resolutions[axis] as isize;
        b[axis] = (b[axis] as isize + delta).rem_euclid(n) as usize;
        b
    }

    pub fn cell_index(&self, cell: &CellId) -> usize {
        let comps = self.components(cell.degree());
        let slot = comps.iter().position(|&j| j == cell.axes).expect("axis subset of wrong size");
        slot * self.vertex_count() + self.vertex_index(&cell.base)
    }

    pub fn cell_at(&self, q: usize, idx: usize) -> CellId {
        let nv = self.vertex_count();
        let comps = self.components(q);
        CellId { axes: comps[idx / nv], base: self.vertex_base(idx % nv) }
    }

    pub fn enumerate_cells(&self, q: usize) -> Result<Vec<CellId>> {
        self.check_degree(q)?;
        let nv = self.vertex_count();
        let mut cells = Vec::with_capacity(self.cell_count(q));
        for axes in self.components(q) {
            for v in 0..nv {
                cells.push(CellId { axes, base: self.vertex_base(v) });
            }
        }
        Ok(cells)
    }

    pub fn vertex_position(&self, base: &[usize; MAX_DIM]) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        for i in 0..self.n {
            x[i] = base[i] as f64 * self.spacing(i);
        }
        x
    }

    /// Cell midpoint `(k_i + ½[i∈J]) h_i`, reduced into `[0, L_i)`.
    pub fn midpoint(&self, cell: &CellId) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        for i in 0..self.n {
            let half = if cell.axes.contains(i) { 0.5 } else { 0.0 };
            x[i] = ((cell.base[i] as f64 + half) * self.spacing(i)).rem_euclid(self.lengths[i]);
        }
        x
    }

    /// `∏_{j∈J} h_j`: converts a component value into an integrated cochain value.
    pub fn cell_volume(&self, axes: AxisSet) -> f64 {
        axes.axes().map(|j| self.spacing(j)).product()
    }

    /// Shortest signed displacement `x - p` on the torus, per axis.
    pub fn displacement(&self, x: &[f64], p: &[f64]) -> [f64; MAX_DIM] {
        let mut d = [0.0; MAX_DIM];
        for i in 0..self.n {
            let l = self.lengths[i];
            let mut v = (x[i] - p[i]).rem_euclid(l);
            if v > 0.5 * l {
                v -= l;
            }
            d[i] = v;
        }
        d
    }

    pub fn zero_cochain(&self, q: usize) -> Cochain {
        Cochain { grid: *self, q, values: vec![0.0; self.cell_count(q)] }
    }
}

pub fn enumerate_cells(grid: &TorusGrid, q: usize) -> Result<Vec<CellId>> {
    grid.enumerate_cells(q)
}

/// Signed cubical coboundary `d_q` from `q`-cochains to `(q+1)`-cochains.
///
/// For a `(q+1)`-cell with axes `j_0 < … < j_q`, the facet obtained by
/// dropping `j_p` appears at the base vertex with sign `−(−1)^p` and at the
/// base shifted by one step along `j_p` with sign `+(−1)^p`. For `q = n` the
/// operator has no rows.
pub fn coboundary(grid: &TorusGrid, q: usize) -> Result<CsrMatrix> {
    grid.check_degree(q)?;
    let cols = grid.cell_count(q);
    if q == grid.n {
        return Ok(CsrMatrix::zeros(0, cols));
    }
    let rows = grid.cell_count(q + 1);
    let mut triplets = Vec::with_capacity(rows * 2 * (q + 1));
    for (r, cell) in grid.enumerate_cells(q + 1)?.iter().enumerate() {
        for (p, j) in cell.axes.axes().enumerate() {
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            let facet_axes = cell.axes.remove(j);
            let lower = CellId { axes: facet_axes, base: cell.base };
            let upper = CellId { axes: facet_axes, base: grid.shifted(&cell.base, j, 1) };
            triplets.push((r, grid.cell_index(&upper), sign));
            triplets.push((r, grid.cell_index(&lower), -sign));
        }
    }
    Ok(CsrMatrix::from_triplets(rows, cols, &triplets))
}

/// Diagonal Hodge mass: `∏_{j∉J} h_j / ∏_{j∈J} h_j` per cell.
pub fn mass_matrix(grid: &TorusGrid, q: usize) -> Result<MassMatrix> {
    grid.check_degree(q)?;
    let nv = grid.vertex_count();
    let mut diagonal = Vec::with_capacity(grid.cell_count(q));
    for axes in grid.components(q) {
        let mut m = 1.0;
        for i in 0..grid.n {
            if axes.contains(i) {
                m /= grid.spacing(i);
            } else {
                m *= grid.spacing(i);
            }
        }
        diagonal.extend(std::iter::repeat_n(m, nv));
    }
    Ok(MassMatrix { q, diagonal })
}

/// Midpoint sampling of a `q`-form given by its components `ω_J`.
///
/// `component(J, x)` returns `ω_J(x)`; the stored value is
/// `ω_J(midpoint) · ∏_{j∈J} h_j`.
pub fn sample_form<F>(grid: &TorusGrid, q: usize, component: F) -> Result<Cochain>
where
    F: Fn(AxisSet, &[f64]) -> f64,
{
    grid.check_degree(q)?;
    let mut values = Vec::with_capacity(grid.cell_count(q));
    for cell in grid.enumerate_cells(q)? {
        let x = grid.midpoint(&cell);
        let v = component(cell.axes, &x[..grid.n]);
        if !v.is_finite() {
            return Err(WittenError::NonFinite { component: format!("{:?}", cell.axes), value: v });
        }
        values.push(v * grid.cell_volume(cell.axes));
    }
    Ok(Cochain { grid: *grid, q, values })
}

impl Cochain {
    pub fn new(grid: &TorusGrid, q: usize, values: Vec<f64>) -> Result<Self> {
        grid.check_degree(q)?;
        if values.len() != grid.cell_count(q) {
            return Err(WittenError::InvalidArgument(format!(
                "cochain of degree {q} needs {} values, got {}",
                grid.cell_count(q),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(WittenError::NonFinite { component: "cochain".into(), value: *v });
        }
        Ok(Self { grid: *grid, q, values })
    }

    pub fn mass_norm(&self) -> f64 {
        mass_matrix(&self.grid, self.q).expect("valid degree").norm(&self.values)
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(self)
    }
}

/// Discrete sup norm: the largest pointwise `g`-norm over vertices.
///
/// At each vertex, component `J` is reconstructed from the `2^q` incident
/// `J`-cells (value ÷ cell volume) as their root mean square; the pointwise
/// norm is the Euclidean norm of the component vector.
pub fn sup_norm(u: &Cochain) -> f64 {
    let grid = &u.grid;
    let nv = grid.vertex_count();
    let comps = grid.components(u.q);
    let mut best = 0.0f64;
    for v in 0..nv {
        let base = grid.vertex_base(v);
        let mut sq = 0.0;
        for (slot, &axes) in comps.iter().enumerate() {
            let vol = grid.cell_volume(axes);
            let along: Vec<usize> = axes.axes().collect();
            let count = 1usize << along.len();
            let mut acc = 0.0;
            for mask in 0..count {
                let mut b = base;
                for (bit, &j) in along.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        b = grid.shifted(&b, j, -1);
                    }
                }
                let val = u.values[slot * nv + grid.vertex_index(&b)] / vol;
                acc += val * val;
            }
            sq += acc / count as f64;
        }
        best = best.max(sq.sqrt());
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn cell_counts() {
        let g = build_grid(2, &[1.0, 1.0], &[4, 4]).unwrap();
        assert_eq!(g.cell_count(0), 16);
        assert_eq!(g.cell_count(1), 32);
        assert_eq!(g.cell_count(2), 16);
        assert_eq!(g.cell_count(3), 0);
        let g1 = build_grid(1, &[1.0], &[8]).unwrap();
        assert_eq!((g1.cell_count(0), g1.cell_count(1)), (8, 8));
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(build_grid(2, &[1.0, 1.0], &[3, 4]).is_err());
        assert!(build_grid(0, &[], &[]).is_err());
        assert!(build_grid(4, &[1.0; 4], &[4; 4]).is_err());
        assert!(build_grid(1, &[0.0], &[8]).is_err());
        assert!(build_grid(1, &[-1.0], &[8]).is_err());
    }

    #[test]
    fn enumeration_order_and_range() {
        let g = TorusGrid::uniform(2, 4).unwrap();
        assert_eq!(g.enumerate_cells(0).unwrap().len(), 16);
        assert_eq!(g.enumerate_cells(2).unwrap().len(), 16);
        assert!(g.enumerate_cells(3).is_err());
        let cells = g.enumerate_cells(1).unwrap();
        assert_eq!(cells[0].axes, AxisSet::from_axes(&[0]));
        assert_eq!(cells[16].axes, AxisSet::from_axes(&[1]));
        assert_eq!(cells[1].base[..2], [0, 1]);
        assert_eq!(cells[4].base[..2], [1, 0]);
    }

    #[test]
    fn coboundary_rows_and_closure() {
        let g = TorusGrid::uniform(2, 8).unwrap();
        let d0 = coboundary(&g, 0).unwrap();
        let d1 = coboundary(&g, 1).unwrap();
        for r in 0..d0.nrows() {
            assert_eq!(d0.row_nnz(r), 2);
        }
        for r in 0..d1.nrows() {
            assert_eq!(d1.row_nnz(r), 4);
            assert!(d1.row(r).all(|(_, v)| v.abs() == 1.0));
        }
        assert_eq!(d1.matmul(&d0).max_abs(), 0.0);
        let ones = vec![1.0; g.cell_count(0)];
        assert!(d0.mul_vec(&ones).iter().all(|&v| v == 0.0));
        let top = coboundary(&g, 2).unwrap();
        assert_eq!((top.nrows(), top.ncols()), (0, 64));
    }

    #[test]
    fn mass_entries_uniform() {
        let g = TorusGrid::uniform(2, 4).unwrap();
        assert!(mass_matrix(&g, 0).unwrap().diagonal.iter().all(|&m| (m - 0.0625).abs() < 1e-15));
        assert!(mass_matrix(&g, 1).unwrap().diagonal.iter().all(|&m| (m - 1.0).abs() < 1e-15));
        assert!(mass_matrix(&g, 2).unwrap().diagonal.iter().all(|&m| (m - 16.0).abs() < 1e-12));
    }

    #[test]
    fn sampling_definitions() {
        let g = TorusGrid::uniform(2, 4).unwrap();
        let one = sample_form(&g, 0, |_, _| 1.0).unwrap();
        assert!(one.values.iter().all(|&v| v == 1.0));
        let dx = sample_form(&g, 1, |j, _| if j == AxisSet::from_axes(&[0]) { 1.0 } else { 0.0 }).unwrap();
        assert!(dx.values[..16].iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(dx.values[16..].iter().all(|&v| v == 0.0));
        assert!(sample_form(&g, 0, |_, _| f64::NAN).is_err());
    }

    #[test]
    fn gaussian_sample_has_point_symmetry() {
        let g = TorusGrid::uniform(2, 16).unwrap();
        let u = sample_form(&g, 0, |_, x| {
            let d = g.displacement(x, &[0.0, 0.0]);
            (-(d[0] * d[0] + d[1] * d[1]) / 2.0).exp()
        })
        .unwrap();
        for v in 0..g.vertex_count() {
            let b = g.vertex_base(v);
            let mirror = [(16 - b[0]) % 16, (16 - b[1]) % 16, 0];
            assert!(u.values[v] > 0.0);
            assert_eq!(u.values[v], u.values[g.vertex_index(&mirror)]);
        }
    }

    #[test]
    fn sup_norm_examples() {
        let g = TorusGrid::uniform(2, 8).unwrap();
        assert_eq!(g.zero_cochain(1).sup_norm(), 0.0);
        assert_eq!(sample_form(&g, 0, |_, _| 1.0).unwrap().sup_norm(), 1.0);
        let g1 = build_grid(1, &[1.0], &[64]).unwrap();
        let c = sample_form(&g1, 0, |_, x| (2.0 * PI * x[0]).cos()).unwrap();
        let direct = c.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(c.sup_norm(), direct);
        assert!((c.sup_norm() - 1.0).abs() < 1e-12);
        // alternating edge values must not cancel
        let alt: Vec<f64> = (0..64).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(Cochain::new(&g1, 1, alt).unwrap().sup_norm() > 0.0);
    }

    #[test]
    fn coboundary_is_second_order_on_cosine() {
        // d of the sampled cos(2πx) against the sampled analytic derivative
        let err = |n: usize| {
            let g = build_grid(1, &[1.0], &[n]).unwrap();
            let f = sample_form(&g, 0, |_, x| (2.0 * PI * x[0]).cos()).unwrap();
            let df = sample_form(&g, 1, |_, x| -2.0 * PI * (2.0 * PI * x[0]).sin()).unwrap();
            let d = coboundary(&g, 0).unwrap().mul_vec(&f.values);
            let h = g.spacing(0);
            d.iter().zip(&df.values).map(|(a, b)| ((a - b) / h).abs()).fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(16), err(32), err(64));
        assert!(e1 / e2 > 3.9 && e2 / e3 > 3.9, "{e1} {e2} {e3}");
    }
}
