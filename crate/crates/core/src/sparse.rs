//! Compressed sparse column storage.
//!
//! Every matrix in the model is indexed (user row, supplier column), and
//! every operation that matters (column normalization, leakage scaling,
//! restriction patches, the transposed resolvent solve) walks columns, so CSC
//! is the only layout we need. Row indices within a column are strictly
//! ascending, which fixes the summation order of every column reduction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Borrowed view of one column.
#[derive(Debug, Clone, Copy)]
pub struct ColumnRef<'a> {
    pub rows: &'a [u32],
    pub values: &'a [f64],
}

impl<'a> ColumnRef<'a> {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        let values = self.values;
        self.rows
            .iter()
            .zip(values.iter())
            .map(|(&r, &v)| (r as usize, v))
    }

    /// Sum in ascending row order.
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, row: usize) -> f64 {
        match self.rows.binary_search(&(row as u32)) {
            Ok(k) => self.values[k],
            Err(_) => 0.0,
        }
    }
}

/// Owned sparse column, used for restriction patches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseColumn {
    pub rows: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseColumn {
    pub fn as_ref(&self) -> ColumnRef<'_> {
        ColumnRef {
            rows: &self.rows,
            values: &self.values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    n_rows: usize,
    n_cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        CscMatrix {
            n_rows,
            n_cols,
            col_ptr: vec![0; n_cols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets. Duplicates are summed in
    /// the order they appear; explicit zeros are dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        for &(r, c, _) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::Argument(format!(
                    "triplet ({r}, {c}) outside a {n_rows}x{n_cols} matrix"
                )));
            }
        }
        // stable: duplicates keep their input order
        order.sort_by_key(|&k| (triplets[k].1, triplets[k].0));

        let mut col_ptr = vec![0usize; n_cols + 1];
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c, v) = triplets[k];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r as u32);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for j in 0..n_cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut m = CscMatrix {
            n_rows,
            n_cols,
            col_ptr,
            row_idx,
            values,
        };
        m.drop_zeros();
        Ok(m)
    }

    /// Builds from per-column entry lists. Each list must be sorted by row.
    pub fn from_columns(n_rows: usize, columns: Vec<SparseColumn>) -> Self {
        let n_cols = columns.len();
        let nnz = columns.iter().map(|c| c.rows.len()).sum();
        let mut col_ptr = Vec::with_capacity(n_cols + 1);
        let mut row_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        col_ptr.push(0);
        for col in columns {
            debug_assert!(col.rows.windows(2).all(|w| w[0] < w[1]));
            row_idx.extend_from_slice(&col.rows);
            values.extend_from_slice(&col.values);
            col_ptr.push(row_idx.len());
        }
        CscMatrix {
            n_rows,
            n_cols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn from_dense(dense: &DMatrix<f64>) -> Self {
        let columns = (0..dense.ncols())
            .map(|j| {
                let mut col = SparseColumn::default();
                for i in 0..dense.nrows() {
                    let v = dense[(i, j)];
                    if v != 0.0 {
                        col.rows.push(i as u32);
                        col.values.push(v);
                    }
                }
                col
            })
            .collect();
        Self::from_columns(dense.nrows(), columns)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n_rows, self.n_cols);
        for j in 0..self.n_cols {
            for (i, v) in self.column(j).iter() {
                d[(i, j)] = v;
            }
        }
        d
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut col_ptr = vec![0usize; self.n_cols + 1];
        let mut row_idx = Vec::with_capacity(self.row_idx.len());
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.n_cols {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                if self.values[k] != 0.0 {
                    row_idx.push(self.row_idx[k]);
                    values.push(self.values[k]);
                }
            }
            col_ptr[j + 1] = row_idx.len();
        }
        self.col_ptr = col_ptr;
        self.row_idx = row_idx;
        self.values = values;
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

    #[inline]
    pub fn column(&self, j: usize) -> ColumnRef<'_> {
        let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
        ColumnRef {
            rows: &self.row_idx[a..b],
            values: &self.values[a..b],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.column(col).get(row)
    }

    /// Column sums, each accumulated in ascending row order.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.n_cols).map(|j| self.column(j).sum()).collect()
    }

    /// Row sums over all columns, accumulated in ascending column order.
    pub fn row_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        for j in 0..self.n_cols {
            for (i, v) in self.column(j).iter() {
                out[i] += v;
            }
        }
        out
    }

    /// Returns a copy with column `j` multiplied by `factors[j]`.
    pub fn scale_columns(&self, factors: &[f64]) -> Result<Self> {
        if factors.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                found: factors.len(),
            });
        }
        let mut out = self.clone();
        for (j, &f) in factors.iter().enumerate() {
            for v in &mut out.values[self.col_ptr[j]..self.col_ptr[j + 1]] {
                *v *= f;
            }
        }
        out.drop_zeros();
        Ok(out)
    }

    /// `y = M x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (i, v) in self.column(j).iter() {
                y[i] += v * xj;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = CscMatrix::from_triplets(3, 2, &[(2, 0, 1.0), (0, 0, 3.0), (2, 0, 4.0), (1, 1, 0.0)])
            .unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(2, 0), 5.0);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.column(0).rows, &[0, 2]);
        assert!(m.column(1).is_empty());
    }

    #[test]
    fn out_of_range_triplet_is_rejected() {
        assert!(CscMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn dense_round_trip() {
        let d = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
        let m = CscMatrix::from_dense(&d);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.to_dense(), d);
        assert_eq!(m.column_sums(), vec![1.0, 3.0, 2.0]);
        assert_eq!(m.row_sums(), vec![3.0, 3.0]);
    }

    #[test]
    fn scaling_and_matvec() {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let m = CscMatrix::from_dense(&d).scale_columns(&[0.5, 0.0]).unwrap();
        assert_eq!(m.nnz(), 2);
        let mut y = [0.0; 2];
        m.mul_vec(&[2.0, 7.0], &mut y);
        assert_eq!(y, [1.0, 3.0]);
    }
}
