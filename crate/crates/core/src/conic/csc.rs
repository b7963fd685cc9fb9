//! Minimal compressed-sparse-column matrix.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    /// Column pointers, length `ncols + 1`.
    pub colptr: Vec<usize>,
    /// Row indices, sorted within each column.
    pub rowval: Vec<usize>,
    pub nzval: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            colptr: vec![0; ncols + 1],
            rowval: Vec::new(),
            nzval: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros kept out.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<_> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowval = Vec::with_capacity(sorted.len());
        let mut nzval: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        let mut cols = Vec::with_capacity(sorted.len());
        for &(r, c, v) in &sorted {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *nzval.last_mut().unwrap() += v;
            } else {
                rowval.push(r);
                nzval.push(v);
                cols.push(c);
                last = Some((r, c));
            }
        }
        // drop entries that cancelled exactly
        let mut keep_r = Vec::with_capacity(rowval.len());
        let mut keep_v = Vec::with_capacity(rowval.len());
        for ((&r, &v), &c) in rowval.iter().zip(&nzval).zip(&cols) {
            if v != 0.0 {
                keep_r.push(r);
                keep_v.push(v);
                colptr[c + 1] += 1;
            }
        }
        for j in 0..ncols {
            colptr[j + 1] += colptr[j];
        }
        Self {
            nrows,
            ncols,
            colptr,
            rowval: keep_r,
            nzval: keep_v,
        }
    }

    pub fn nnz(&self) -> usize {
        self.rowval.len()
    }

    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.colptr[j]..self.colptr[j + 1];
        self.rowval[r.clone()].iter().copied().zip(self.nzval[r].iter().copied())
    }

    /// `y += alpha * A x`
    pub fn gemv(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let ax = alpha * xj;
            for (i, v) in self.col(j) {
                y[i] += v * ax;
            }
        }
    }

    /// `y += alpha * A' x`
    pub fn gemv_t(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for (j, yj) in y.iter_mut().enumerate() {
            let s: f64 = self.col(j).map(|(i, v)| v * x[i]).sum();
            *yj += alpha * s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.gemv(1.0, x, &mut y);
        y
    }

    pub fn mul_t_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.gemv_t(1.0, x, &mut y);
        y
    }

    /// Rows `start..end` as a new matrix (row indices shifted to zero).
    pub fn row_slice(&self, start: usize, end: usize) -> CscMatrix {
        let mut colptr = vec![0usize; self.ncols + 1];
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        for j in 0..self.ncols {
            for (i, v) in self.col(j) {
                if i >= start && i < end {
                    rowval.push(i - start);
                    nzval.push(v);
                }
            }
            colptr[j + 1] = rowval.len();
        }
        CscMatrix {
            nrows: end - start,
            ncols: self.ncols,
            colptr,
            rowval,
            nzval,
        }
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut count = vec![0usize; self.nrows + 1];
        for &i in &self.rowval {
            count[i + 1] += 1;
        }
        for i in 0..self.nrows {
            count[i + 1] += count[i];
        }
        let colptr = count.clone();
        let mut next = count;
        let mut rowval = vec![0; self.nnz()];
        let mut nzval = vec![0.0; self.nnz()];
        for j in 0..self.ncols {
            for (i, v) in self.col(j) {
                let p = next[i];
                rowval[p] = j;
                nzval[p] = v;
                next[i] += 1;
            }
        }
        CscMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            colptr,
            rowval,
            nzval,
        }
    }

    /// `diag(left) * A * diag(right)` in place.
    pub fn scale(&mut self, left: &[f64], right: &[f64]) {
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                self.nzval[p] *= left[self.rowval[p]] * right[j];
            }
        }
    }

    /// Infinity norm of every column.
    pub fn col_norms_inf(&self) -> Vec<f64> {
        (0..self.ncols)
            .map(|j| self.col(j).fold(0.0f64, |m, (_, v)| m.max(v.abs())))
            .collect()
    }

    /// Infinity norm of every row.
    pub fn row_norms_inf(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.nrows];
        for (&i, &v) in self.rowval.iter().zip(&self.nzval) {
            out[i] = out[i].max(v.abs());
        }
        out
    }
}

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
