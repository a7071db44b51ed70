//! Compressed-sparse-row storage for symmetric matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dense::DenseMatrix;
use crate::scalar::Scalar;

/// Symmetric sparse matrix in CSR form. The full pattern is stored, i.e.
/// entry (i, j) is present iff (j, i) is present with the same value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSymMatrix<S> {
    dim: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<S>,
}

impl<S: Scalar> SparseSymMatrix<S> {
    /// Builds from (row, col, value) triplets covering the full pattern.
    /// Duplicate coordinates are summed; the result is checked for symmetry.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, S)]) -> Result<Self> {
        let mut per_row: Vec<Vec<(usize, S)>> = vec![Vec::new(); dim];
        for &(r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::Shape(format!(
                    "triplet ({r}, {c}) out of bounds for dim {dim}"
                )));
            }
            per_row[r].push((c, v));
        }
        let mut row_offsets = Vec::with_capacity(dim + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for row in &mut per_row {
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut merged: Vec<(usize, S)> = Vec::with_capacity(row.len());
            for &(c, v) in row.iter() {
                match merged.last_mut() {
                    Some((lc, lv)) if *lc == c => *lv += v,
                    _ => merged.push((c, v)),
                }
            }
            for (c, v) in merged {
                if v != S::zero() {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        let m = SparseSymMatrix {
            dim,
            row_offsets,
            col_indices,
            values,
        };
        m.check_symmetric()?;
        Ok(m)
    }

    fn check_symmetric(&self) -> Result<()> {
        for r in 0..self.dim {
            for (c, v) in self.row_entries(r) {
                if !v.is_finite() {
                    return Err(Error::Numeric(format!("non-finite entry at ({r}, {c})")));
                }
                let mirror = self.entry(c, r);
                if mirror != v {
                    return Err(Error::Shape(format!(
                        "asymmetric pattern at ({r}, {c}): {v} vs {mirror}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        let lo = self.row_offsets[r];
        let hi = self.row_offsets[r + 1];
        self.col_indices[lo..hi]
            .iter()
            .zip(&self.values[lo..hi])
            .map(|(&c, &v)| (c, v))
    }

    /// Value at (r, c); zero when the coordinate is not stored.
    pub fn entry(&self, r: usize, c: usize) -> S {
        let lo = self.row_offsets[r];
        let hi = self.row_offsets[r + 1];
        match self.col_indices[lo..hi].binary_search(&c) {
            Ok(pos) => self.values[lo + pos],
            Err(_) => S::zero(),
        }
    }

    /// `y = M x`.
    pub fn matvec(&self, x: &[S], y: &mut [S]) {
        assert_eq!(x.len(), self.dim, "matvec input length");
        assert_eq!(y.len(), self.dim, "matvec output length");
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = S::zero();
            for (c, v) in self.row_entries(r) {
                acc += v * x[c];
            }
            *out = acc;
        }
    }

    /// `M X` for dense `X` with `dim` rows.
    pub fn matmul_dense(&self, x: &DenseMatrix<S>) -> DenseMatrix<S> {
        assert_eq!(x.rows(), self.dim, "matmul_dense row mismatch");
        let mut out = DenseMatrix::zeros(self.dim, x.cols());
        for r in 0..self.dim {
            let lo = self.row_offsets[r];
            let hi = self.row_offsets[r + 1];
            for idx in lo..hi {
                let c = self.col_indices[idx];
                let v = self.values[idx];
                let x_row = x.row(c);
                let out_row = out.row_mut(r);
                for (o, &xv) in out_row.iter_mut().zip(x_row) {
                    *o += v * xv;
                }
            }
        }
        out
    }

    /// Elementwise sum; patterns are merged.
    pub fn add(&self, other: &SparseSymMatrix<S>) -> Result<SparseSymMatrix<S>> {
        if self.dim != other.dim {
            return Err(Error::Shape(format!(
                "cannot add {}x{0} and {}x{1} matrices",
                self.dim, other.dim
            )));
        }
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.dim {
            triplets.extend(self.row_entries(r).map(|(c, v)| (r, c, v)));
            triplets.extend(other.row_entries(r).map(|(c, v)| (r, c, v)));
        }
        SparseSymMatrix::from_triplets(self.dim, &triplets)
    }

    pub fn to_dense(&self) -> DenseMatrix<S> {
        let mut out = DenseMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row_entries(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> S {
        self.values.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    /// Largest row sum of absolute values plus nothing — the Gershgorin bound
    /// on the spectral radius for a symmetric matrix.
    pub fn gershgorin_bound(&self) -> S {
        (0..self.dim)
            .map(|r| self.row_entries(r).map(|(_, v)| v.abs()).sum::<S>())
            .fold(S::zero(), S::max)
    }
}
