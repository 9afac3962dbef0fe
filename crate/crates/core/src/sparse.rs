//! Compressed sparse row storage.

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// CSR matrix with strictly increasing column indices per row and no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, checking every structural invariant.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds a matrix from `(row, col, value)` triplets in any order.
    /// Duplicate coordinates are summed; entries that end up zero are dropped.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, _) in &triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::shape(
                    "from_triplets",
                    format!("entry ({r}, {c}) outside {n_rows}x{n_cols}"),
                ));
            }
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if rows.last() == Some(&r) && col_indices.last() == Some(&c) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                col_indices.push(c);
                values.push(v);
            }
        }
        let mut kept_cols = Vec::with_capacity(col_indices.len());
        let mut kept_vals = Vec::with_capacity(values.len());
        for ((r, c), v) in rows.into_iter().zip(col_indices).zip(values) {
            if v != 0.0 {
                row_offsets[r + 1] += 1;
                kept_cols.push(c);
                kept_vals.push(v);
            }
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self::from_csr(n_rows, n_cols, row_offsets, kept_cols, kept_vals)
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::shape("csr", detail));
        if self.row_offsets.len() != self.n_rows + 1 {
            return bad(format!(
                "row_offsets has length {}, expected {}",
                self.row_offsets.len(),
                self.n_rows + 1
            ));
        }
        if self.row_offsets[0] != 0 {
            return bad("row_offsets[0] != 0".into());
        }
        if self.col_indices.len() != self.values.len() || self.row_offsets[self.n_rows] != self.col_indices.len() {
            return bad("row_offsets, col_indices and values disagree on nnz".into());
        }
        for i in 0..self.n_rows {
            let (start, end) = (self.row_offsets[i], self.row_offsets[i + 1]);
            if start > end {
                return bad(format!("row_offsets decreases at row {i}"));
            }
            let cols = &self.col_indices[start..end];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("columns of row {i} not strictly increasing"));
            }
            if cols.last().is_some_and(|&c| c >= self.n_cols) {
                return bad(format!("column index out of range in row {i}"));
            }
            if self.values[start..end].contains(&0.0) {
                return bad(format!("explicit zero stored in row {i}"));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[s..e], &self.values[s..e])
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    /// Iterates `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    /// Entry-by-entry symmetry check with absolute tolerance `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && self
                .iter()
                .all(|(i, j, v)| (self.get(j, i) - v).abs() <= tol && self.get(j, i) != 0.0)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols, "matvec dimension mismatch");
        (0..self.n_rows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }
}
