//! Facial-reduction presolve.
//!
//! A variable with zero cost whose only appearances are one PSD diagonal
//! entry and some inequality rows, all loosened as it grows, can be pushed up
//! without limit. Every dual-feasible point then has a zero multiplier on
//! those rows, so the PSD dual has an identically zero row and column there.
//! Dropping the variable, its inequality rows and that row/column of the
//! block leaves the dual unchanged and removes the unbounded face that
//! otherwise makes interior-point iterates drift. Afterwards each dropped
//! variable gets the smallest value that makes its rows feasible again
//! (a Schur complement for the PSD entry).
//!
//! The reduced primal can be looser than the original when the original has
//! a duality gap, so this is only used as a fallback when the full program
//! does not converge.

use nalgebra::{DMatrix, SymmetricEigen};

use super::csc::CscMatrix;
use super::psd::{svec_index, SQRT2};
use super::{ConeDims, StandardConicForm};

#[derive(Clone, Copy)]
enum RowKind {
    Zero,
    Nonneg,
    Psd { block: usize, a: usize, b: usize },
}

struct Removal {
    var: usize,
    /// `(block, diagonal index, active indices of the block at removal time)`
    psd: Option<(usize, usize, Vec<usize>)>,
}

pub(crate) struct Presolve {
    pub reduced: StandardConicForm,
    keep_vars: Vec<usize>,
    keep_rows: Vec<usize>,
    removed: Vec<Removal>,
    psd_off: Vec<usize>,
    psd_side: Vec<usize>,
}

/// Returns `None` when nothing can be removed.
pub(crate) fn presolve(sf: &StandardConicForm) -> Option<Presolve> {
    let (n, m) = (sf.num_vars(), sf.num_rows());
    let cones = &sf.cones;
    let psd_off = cones.psd_offsets();
    let mut kind = vec![RowKind::Zero; m];
    for r in cones.zero..cones.zero + cones.nonneg {
        kind[r] = RowKind::Nonneg;
    }
    for (block, (&side, &off)) in cones.psd.iter().zip(&psd_off).enumerate() {
        for a in 0..side {
            for b in a..side {
                kind[off + svec_index(side, a, b)] = RowKind::Psd { block, a, b };
            }
        }
    }

    let mut row_on = vec![true; m];
    let mut var_on = vec![true; n];
    let mut index_on: Vec<Vec<bool>> = cones.psd.iter().map(|&s| vec![true; s]).collect();
    let mut removed = Vec::new();
    loop {
        let mut changed = false;
        for j in 0..n {
            if !var_on[j] || sf.c[j] != 0.0 {
                continue;
            }
            let mut diag = None;
            let mut ok = true;
            for (r, v) in sf.a.col(j).filter(|&(r, _)| row_on[r]) {
                match kind[r] {
                    RowKind::Zero => ok = false,
                    RowKind::Nonneg => ok &= v < 0.0,
                    RowKind::Psd { block, a, b } => {
                        ok &= a == b && v < 0.0 && diag.is_none();
                        diag = Some((block, a));
                    }
                }
                if !ok {
                    break;
                }
            }
            if !ok {
                continue;
            }
            var_on[j] = false;
            changed = true;
            for (r, _) in sf.a.col(j) {
                if matches!(kind[r], RowKind::Nonneg) {
                    row_on[r] = false;
                }
            }
            let psd = diag.map(|(block, d)| {
                let side = cones.psd[block];
                let active: Vec<usize> = (0..side).filter(|&i| index_on[block][i]).collect();
                index_on[block][d] = false;
                for &i in &active {
                    row_on[psd_off[block] + svec_index(side, i.min(d), i.max(d))] = false;
                }
                (block, d, active)
            });
            removed.push(Removal { var: j, psd });
        }
        if !changed {
            break;
        }
    }
    if removed.is_empty() {
        return None;
    }

    // reduced rows: zero and nonneg rows in order, then every block restricted
    // to its active indices (still upper row-major)
    let mut keep_rows: Vec<usize> = (0..cones.zero + cones.nonneg).filter(|&r| row_on[r]).collect();
    let nonneg = keep_rows.len() - cones.zero;
    let mut psd = Vec::new();
    for (block, &side) in cones.psd.iter().enumerate() {
        let act: Vec<usize> = (0..side).filter(|&i| index_on[block][i]).collect();
        if act.is_empty() {
            continue;
        }
        psd.push(act.len());
        for (ai, &a) in act.iter().enumerate() {
            for &b in &act[ai..] {
                keep_rows.push(psd_off[block] + svec_index(side, a, b));
            }
        }
    }
    let keep_vars: Vec<usize> = (0..n).filter(|&j| var_on[j]).collect();
    let mut row_map = vec![usize::MAX; m];
    for (i, &r) in keep_rows.iter().enumerate() {
        row_map[r] = i;
    }
    let mut triplets = Vec::new();
    for (jn, &j) in keep_vars.iter().enumerate() {
        for (r, v) in sf.a.col(j) {
            if row_map[r] != usize::MAX {
                triplets.push((row_map[r], jn, v));
            }
        }
    }
    let reduced = StandardConicForm {
        c: keep_vars.iter().map(|&j| sf.c[j]).collect(),
        c0: sf.c0,
        a: CscMatrix::from_triplets(keep_rows.len(), keep_vars.len(), &triplets),
        b: keep_rows.iter().map(|&r| sf.b[r]).collect(),
        cones: ConeDims {
            zero: cones.zero,
            nonneg,
            psd,
        },
    };
    Some(Presolve {
        reduced,
        keep_vars,
        keep_rows,
        removed,
        psd_off,
        psd_side: cones.psd.clone(),
    })
}

impl Presolve {
    #[cfg(test)]
    fn num_removed(&self) -> usize {
        self.removed.len()
    }

    /// Maps a reduced solution back to the original program.
    pub fn restore(
        &self,
        sf: &StandardConicForm,
        xr: &[f64],
        sr: &[f64],
        yr: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; sf.num_vars()];
        for (&j, &v) in self.keep_vars.iter().zip(xr) {
            x[j] = v;
        }
        // r = b - A x, kept current as removed variables are filled in
        let mut r = sf.b.clone();
        sf.a.gemv(-1.0, &x, &mut r);
        for rm in self.removed.iter().rev() {
            let j = rm.var;
            let mut lo = f64::NEG_INFINITY;
            for (row, v) in sf.a.col(j) {
                if v < 0.0 && row >= sf.cones.zero && row < sf.cones.zero + sf.cones.nonneg {
                    lo = lo.max(r[row] / v);
                }
            }
            if let Some((block, d, active)) = &rm.psd {
                let (side, off) = (self.psd_side[*block], self.psd_off[*block]);
                let at = |a: usize, b: usize| {
                    let w = if a == b { 1.0 } else { SQRT2 };
                    r[off + svec_index(side, a.min(b), a.max(b))] / w
                };
                let rest: Vec<usize> = active.iter().copied().filter(|i| i != d).collect();
                let need = schur_need(
                    &DMatrix::from_fn(rest.len(), rest.len(), |p, q| at(rest[p], rest[q])),
                    &rest.iter().map(|&i| at(i, *d)).collect::<Vec<_>>(),
                );
                let row = off + svec_index(side, *d, *d);
                let coef = sf.a.col(j).find(|&(rr, _)| rr == row).map_or(-1.0, |(_, v)| v);
                // r_dd - coef * x_j >= need
                lo = lo.max((r[row] - need) / coef);
            }
            let xj = if lo.is_finite() { lo } else { 0.0 };
            x[j] = xj;
            for (row, v) in sf.a.col(j) {
                r[row] -= v * xj;
            }
        }
        let mut s = r;
        let mut y = vec![0.0; sf.num_rows()];
        for (i, &row) in self.keep_rows.iter().enumerate() {
            s[row] = sr[i];
            y[row] = yr[i];
        }
        // zero-cone slacks are zero by definition
        s[..sf.cones.zero].iter_mut().for_each(|v| *v = 0.0);
        (x, s, y)
    }
}

/// Smallest diagonal value `t` with `[M m; m' t]` PSD (up to round-off), using
/// a floored pseudo-inverse of `M`.
fn schur_need(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, l| a.max(l.abs()));
    let floor = 1e-13 * scale;
    let mut need = 0.0;
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        let p: f64 = eig.eigenvectors.column(k).iter().zip(v).map(|(a, b)| a * b).sum();
        need += p * p / l.max(floor);
    }
    need
}
