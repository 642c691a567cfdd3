//! Compressed sparse row matrices and MatrixMarket coordinate I/O.
//!
//! Only what the deformed complex needs: triplet assembly with deterministic
//! duplicate summation, products, transposes, diagonal scalings and a
//! row-parallel matvec.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Result, WittenError};

/// Row count above which matvecs are split across the rayon pool.
const PAR_ROWS: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Assemble from `(row, col, value)` triplets. Duplicates are summed in
    /// the order they were supplied, so identical inputs give bit-identical
    /// matrices. Explicit zeros produced by cancellation are kept.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) outside {nrows}x{ncols}");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        // bucket by row, preserving input order
        let mut next = counts.clone();
        let mut buf = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            buf[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for r in 0..nrows {
            let row = &mut buf[counts[r]..counts[r + 1]];
            // stable: equal columns keep input order for the summation
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut acc = 0.0;
                while k < row.len() && row[k].0 == c {
                    acc += row[k].1;
                    k += 1;
                }
                col_idx.push(c);
                values.push(acc);
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v))).collect()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.values[k] = f(r, self.col_idx[k], self.values[k]);
            }
        }
        out
    }

    /// `diag(left) * self * diag(right)`.
    pub fn scale(&self, left: &[f64], right: &[f64]) -> Self {
        assert_eq!(left.len(), self.nrows);
        assert_eq!(right.len(), self.ncols);
        self.map_values(|r, c, v| left[r] * v * right[c])
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.push((c, r, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn matmul(&self, other: &CsrMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows, "dimension mismatch in matmul");
        let mut t = Vec::new();
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    t.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.nrows, other.ncols, &t)
    }

    /// `selfᵀ self`, accumulated row by row so that entries `(i,j)` and
    /// `(j,i)` receive identical contributions in identical order: the result
    /// is exactly symmetric.
    pub fn gram(&self) -> Self {
        let mut t = Vec::new();
        for r in 0..self.nrows {
            for (i, a) in self.row(r) {
                for (j, b) in self.row(r) {
                    t.push((i, j, a * b));
                }
            }
        }
        Self::from_triplets(self.ncols, self.ncols, &t)
    }

    /// `self selfᵀ`, exactly symmetric (see [`CsrMatrix::gram`]).
    pub fn outer_gram(&self) -> Self {
        self.transpose().gram()
    }

    pub fn add(&self, other: &CsrMatrix) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = self.triplets();
        t.extend(other.triplets());
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        let row = |r: usize| -> f64 {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            acc
        };
        if self.nrows >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(r, out)| *out = row(r));
        } else {
            for (r, out) in y.iter_mut().enumerate() {
                *out = row(r);
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// Upper bound on the spectral radius from absolute row sums.
    pub fn gershgorin_bound(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn symmetry_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[r][c] += v;
            }
        }
        d
    }

    /// Write in MatrixMarket coordinate format with 1-based indices.
    /// Values use Rust's shortest round-trip formatting, so re-import is exact.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::new();
        s.push_str("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.nrows, self.ncols, self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                let _ = writeln!(s, "{} {} {:e}", r + 1, c + 1, v);
            }
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_matrix_market<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let bad = |line: usize, msg: &str| WittenError::Format(format!("line {}: {msg}", line + 1));
        let (_, header) = lines.next().ok_or_else(|| bad(0, "empty input"))?;
        let header = header?;
        let lower = header.to_ascii_lowercase();
        if !lower.starts_with("%%matrixmarket matrix coordinate real") {
            return Err(bad(0, "expected '%%MatrixMarket matrix coordinate real' header"));
        }
        let symmetric = lower.contains("symmetric");
        let mut size: Option<(usize, usize, usize)> = None;
        let mut triplets = Vec::new();
        for (ln, line) in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('%') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if size.is_none() {
                if fields.len() != 3 {
                    return Err(bad(ln, "expected 'rows cols nnz'"));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|_| bad(ln, "bad size field"));
                size = Some((p(fields[0])?, p(fields[1])?, p(fields[2])?));
                continue;
            }
            if fields.len() != 3 {
                return Err(bad(ln, "expected 'row col value'"));
            }
            let i: usize = fields[0].parse().map_err(|_| bad(ln, "bad row index"))?;
            let j: usize = fields[1].parse().map_err(|_| bad(ln, "bad column index"))?;
            let v: f64 = fields[2].parse().map_err(|_| bad(ln, "bad value"))?;
            let (m, n, _) = size.unwrap();
            if i == 0 || j == 0 || i > m || j > n {
                return Err(bad(ln, "index out of range (indices are 1-based)"));
            }
            triplets.push((i - 1, j - 1, v));
            if symmetric && i != j {
                triplets.push((j - 1, i - 1, v));
            }
        }
        let (m, n, nnz) = size.ok_or_else(|| bad(0, "missing size line"))?;
        if !symmetric && triplets.len() != nnz {
            return Err(WittenError::Format(format!("declared {nnz} entries, found {}", triplets.len())));
        }
        Ok(Self::from_triplets(m, n, &triplets))
    }
}
