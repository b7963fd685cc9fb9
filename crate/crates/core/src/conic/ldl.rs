//! Sparse `LDL'` factorization for quasi-definite matrices.
//!
//! Works on the upper triangle of a symmetric matrix in CSC form with the
//! natural ordering. The elimination tree and column counts are computed once;
//! refactoring with new numeric values reuses them. Pivots with the wrong sign
//! for their block (positive for primal, negative for dual) are replaced by a
//! small regularization of the expected sign.

use super::csc::CscMatrix;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct LdlFactor {
    n: usize,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    signs: Vec<f64>,
    dyn_eps: f64,
    dyn_delta: f64,
    /// Number of pivots replaced during the last factorization.
    pub regularized: usize,
    // workspaces
    y_markers: Vec<bool>,
    y_vals: Vec<f64>,
    y_idx: Vec<usize>,
    elim: Vec<usize>,
    l_next: Vec<usize>,
}

impl LdlFactor {
    /// Symbolic analysis of the upper-triangular pattern `a`; `signs[i]` is
    /// `+1` for primal and `-1` for dual pivots.
    pub fn new(a: &CscMatrix, signs: Vec<f64>) -> Result<Self> {
        let n = a.ncols;
        if a.nrows != n || signs.len() != n {
            return Err(Error::Numerical("LDL input must be square".into()));
        }
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for p in a.colptr[j]..a.colptr[j + 1] {
                let mut i = a.rowval[p];
                if i > j {
                    return Err(Error::Numerical("LDL input is not upper triangular".into()));
                }
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let nnz = lp[n];
        Ok(Self {
            n,
            etree,
            lp,
            li: vec![0; nnz],
            lx: vec![0.0; nnz],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            signs,
            dyn_eps: 1e-13,
            dyn_delta: 2e-7,
            regularized: 0,
            y_markers: vec![false; n],
            y_vals: vec![0.0; n],
            y_idx: vec![0; n],
            elim: vec![0; n],
            l_next: vec![0; n],
        })
    }

    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorization; `a` must have the pattern given to [`new`].
    ///
    /// [`new`]: LdlFactor::new
    pub fn factor(&mut self, a: &CscMatrix) -> Result<()> {
        let n = self.n;
        self.regularized = 0;
        self.l_next[..n].copy_from_slice(&self.lp[..n]);
        for k in 0..n {
            self.d[k] = 0.0;
            let mut nnz_y = 0;
            for p in a.colptr[k]..a.colptr[k + 1] {
                let b = a.rowval[p];
                if b == k {
                    self.d[k] = a.nzval[p];
                    continue;
                }
                self.y_vals[b] = a.nzval[p];
                if !self.y_markers[b] {
                    self.y_markers[b] = true;
                    self.elim[0] = b;
                    let mut nnz_e = 1;
                    let mut next = self.etree[b];
                    while next != NONE && next < k {
                        if self.y_markers[next] {
                            break;
                        }
                        self.y_markers[next] = true;
                        self.elim[nnz_e] = next;
                        nnz_e += 1;
                        next = self.etree[next];
                    }
                    while nnz_e > 0 {
                        nnz_e -= 1;
                        self.y_idx[nnz_y] = self.elim[nnz_e];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = self.y_idx[i];
                let tmp = self.l_next[c];
                let yc = self.y_vals[c];
                for j in self.lp[c]..tmp {
                    self.y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[tmp] = k;
                self.lx[tmp] = yc * self.dinv[c];
                self.d[k] -= yc * self.lx[tmp];
                self.l_next[c] += 1;
                self.y_vals[c] = 0.0;
                self.y_markers[c] = false;
            }
            if self.d[k] * self.signs[k] <= self.dyn_eps {
                self.d[k] = self.signs[k] * self.dyn_delta;
                self.regularized += 1;
            }
            if !self.d[k].is_finite() {
                return Err(Error::Numerical(format!("non-finite pivot at column {k}")));
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        Ok(())
    }

    /// Solves `L D L' x = b` in place.
    pub fn solve(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.lp[i]..self.lp[i + 1] {
                    x[self.li[j]] -= self.lx[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                s -= self.lx[j] * x[self.li[j]];
            }
            x[i] = s;
        }
    }
}

/// `y = M x` for a symmetric `M` stored as its upper triangle.
pub fn sym_upper_mul(a: &CscMatrix, x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..a.ncols {
        for (i, v) in a.col(j) {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
    }
}
