//! Symmetric-matrix vectorization and positive-semidefinite cone helpers.
//!
//! `svec` stacks the upper triangle row by row (equivalently, the lower
//! triangle column by column) and multiplies off-diagonal entries by `sqrt(2)`
//! so that `svec(A) . svec(B) = tr(AB)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Number of svec entries for a side-`s` matrix.
pub const fn svec_len(s: usize) -> usize {
    s * (s + 1) / 2
}

/// Position of upper entry `(a, b)`, `a <= b`, in the svec of a side-`s` matrix.
pub fn svec_index(s: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    // rows before `a` hold s, s-1, ..., s-a+1 entries
    a * s - a * a.saturating_sub(1) / 2 + (b - a)
}

/// Inverse of [`svec_index`].
pub fn svec_pair(s: usize, mut k: usize) -> (usize, usize) {
    for a in 0..s {
        let row = s - a;
        if k < row {
            return (a, a + k);
        }
        k -= row;
    }
    panic!("svec position out of range");
}

pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let s = m.nrows();
    let mut out = Vec::with_capacity(svec_len(s));
    for a in 0..s {
        out.push(m[(a, a)]);
        for b in a + 1..s {
            out.push(SQRT2 * 0.5 * (m[(a, b)] + m[(b, a)]));
        }
    }
    out
}

pub fn smat(v: &[f64], s: usize) -> DMatrix<f64> {
    debug_assert_eq!(v.len(), svec_len(s));
    let mut m = DMatrix::zeros(s, s);
    let mut k = 0;
    for a in 0..s {
        m[(a, a)] = v[k];
        k += 1;
        for b in a + 1..s {
            let x = v[k] / SQRT2;
            m[(a, b)] = x;
            m[(b, a)] = x;
            k += 1;
        }
    }
    m
}

/// Side length `s` with `s(s+1)/2 = len`.
pub fn side_from_len(len: usize) -> Option<usize> {
    let s = ((8.0 * len as f64 + 1.0).sqrt() as usize).saturating_sub(1) / 2;
    (s..s + 2).find(|&t| svec_len(t) == len)
}

fn symmetric_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = 0.5 * (m + m.transpose());
    SymmetricEigen::new(sym)
}

/// Frobenius-nearest PSD matrix: eigendecompose, clamp negative eigenvalues.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetric_eigen(m);
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return 0.5 * (m + m.transpose());
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&clamped) * q.transpose();
    0.5 * (&out + out.transpose())
}

/// Projects an svec in place.
pub fn project_psd_svec(v: &mut [f64], s: usize) {
    let p = project_psd(&smat(v, s));
    v.copy_from_slice(&svec(&p));
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    symmetric_eigen(m).eigenvalues.min()
}

/// A factor `L` with `L L' = m` for a positive-definite `m`, through its
/// eigendecomposition (eigenvalues floored at `floor`).
pub fn sqrt_factor(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = symmetric_eigen(m);
    let d: DVector<f64> = eig.eigenvalues.map(|l| l.max(floor).sqrt());
    let mut q = eig.eigenvectors;
    for (j, dj) in d.iter().enumerate() {
        q.column_mut(j).scale_mut(*dj);
    }
    q
}

/// Symmetrized Jordan product `(UV + VU)/2`.
pub fn jordan(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (u * v + v * u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_round_trip_and_inner_product() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let b = DMatrix::from_row_slice(3, 3, &[0.5, -1.0, 0.0, -1.0, 2.0, 1.5, 0.0, 1.5, -3.0]);
        let va = svec(&a);
        assert_eq!(va.len(), 6);
        assert!((smat(&va, 3) - &a).norm() < 1e-15);
        let ip: f64 = va.iter().zip(svec(&b)).map(|(x, y)| x * y).sum();
        assert!((ip - (&a * &b).trace()).abs() < 1e-12);
    }

    #[test]
    fn svec_indices_follow_upper_row_major() {
        let s = 4;
        let mut k = 0;
        for a in 0..s {
            for b in a..s {
                assert_eq!(svec_index(s, a, b), k);
                assert_eq!(svec_index(s, b, a), k);
                assert_eq!(svec_pair(s, k), (a, b));
                k += 1;
            }
        }
        assert_eq!(side_from_len(10), Some(4));
        assert_eq!(side_from_len(1), Some(1));
        assert_eq!(side_from_len(7), None);
    }

    #[test]
    fn projection_examples() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert!((project_psd(&i) - &i).norm() < 1e-15);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        let p = project_psd(&d);
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        assert!((p - want).norm() < 1e-15);
    }

    #[test]
    fn sqrt_factor_reconstructs() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let l = sqrt_factor(&m, 0.0);
        assert!((&l * l.transpose() - m).norm() < 1e-14);
    }
}
