//! Operator-splitting backend.
//!
//! Alternates an affine projection, computed from a cached quasi-definite
//! factorization, with a Euclidean projection onto the cone product
//! (nonnegative clamp, PSD eigenvalue clamp). Cone rows are eliminated from
//! the linear system, which leaves
//!
//! ```text
//! [ sI + rho G'G    A' ] [x~]   [ s x - c + G'(rho (h - s_G) + y_G) ]
//! [ A      -1/rho_e I  ] [nu] = [ b - s_A + y_A / rho_e             ]
//! ```
//!
//! with a stiffer penalty `rho_e` on the equality rows. The penalty adapts to
//! the residual balance; every change triggers a refactorization.

use super::csc::CscMatrix;
use super::ldl::LdlFactor;
use super::{RawSolution, Residuals, SolverOptions, SolverStatus, StandardConicForm};
use crate::error::Result;

const SIGMA: f64 = 1e-6;
const RHO_INIT: f64 = 0.1;
const RHO_EQ_FACTOR: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const CHECK_EVERY: usize = 10;
const ADAPT_EVERY: usize = 50;

struct Kkt {
    ldl: LdlFactor,
    rho: f64,
}

fn build_kkt(sf: &StandardConicForm, rho: f64) -> Result<Kkt> {
    let n = sf.num_vars();
    let p = sf.cones.zero;
    let at = sf.a.transpose(); // columns of `at` are rows of A
    let mut trip = Vec::new();
    for j in 0..n {
        trip.push((j, j, SIGMA));
    }
    for r in 0..p {
        for (j, v) in at.col(r) {
            trip.push((j, n + r, v));
        }
        trip.push((n + r, n + r, -1.0 / (RHO_EQ_FACTOR * rho)));
    }
    for r in p..sf.num_rows() {
        let row: Vec<(usize, f64)> = at.col(r).collect();
        for (a, &(i, vi)) in row.iter().enumerate() {
            for &(j, vj) in &row[a..] {
                trip.push((i.min(j), i.max(j), rho * vi * vj));
            }
        }
    }
    let k = CscMatrix::from_triplets(n + p, n + p, &trip);
    let mut signs = vec![1.0; n];
    signs.extend(std::iter::repeat_n(-1.0, p));
    let mut ldl = LdlFactor::new(&k, signs)?;
    ldl.factor(&k)?;
    Ok(Kkt { ldl, rho })
}

pub(crate) fn solve(
    sf: &StandardConicForm,
    opts: &SolverOptions,
    check: &dyn Fn(&[f64], &[f64], &[f64]) -> Residuals,
) -> Result<RawSolution> {
    let (m, n, p) = (sf.num_rows(), sf.num_vars(), sf.cones.zero);
    let alpha = opts.over_relaxation;
    let mut kkt = build_kkt(sf, RHO_INIT)?;
    let mut x = vec![0.0; n];
    let mut s = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut rhs = vec![0.0; n + p];
    let mut status = SolverStatus::MaxIters;
    let mut iterations = opts.max_iters;
    let dual = |y: &[f64]| y.iter().map(|v| -v).collect::<Vec<f64>>();

    for it in 1..=opts.max_iters {
        let rho = kkt.rho;
        let rho_e = RHO_EQ_FACTOR * rho;
        // right-hand side
        let mut w = vec![0.0; m];
        for r in p..m {
            w[r] = rho * (sf.b[r] - s[r]) + y[r];
        }
        rhs[..n].iter_mut().zip(&x).zip(&sf.c).for_each(|((r, x), c)| *r = SIGMA * x - c);
        sf.a.gemv_t(1.0, &w, &mut rhs[..n]);
        for r in 0..p {
            rhs[n + r] = sf.b[r] - s[r] + y[r] / rho_e;
        }
        kkt.ldl.solve(&mut rhs);
        let xt = &rhs[..n];
        // s~ = b - A x~
        let mut st = sf.b.clone();
        sf.a.gemv(-1.0, xt, &mut st);

        for (xi, &t) in x.iter_mut().zip(xt) {
            *xi = alpha * t + (1.0 - alpha) * *xi;
        }
        let mut s_relax = vec![0.0; m];
        let mut v = vec![0.0; m];
        for r in 0..m {
            s_relax[r] = alpha * st[r] + (1.0 - alpha) * s[r];
            let rr = if r < p { rho_e } else { rho };
            v[r] = s_relax[r] + y[r] / rr;
        }
        sf.project_cone(&mut v);
        for r in 0..m {
            let rr = if r < p { rho_e } else { rho };
            y[r] += rr * (s_relax[r] - v[r]);
        }
        s = v;

        if it % CHECK_EVERY == 0 || it == opts.max_iters {
            let res = check(&x, &s, &dual(&y));
            if res.within(opts) {
                status = SolverStatus::Optimal;
                iterations = it;
                break;
            }
            if it % ADAPT_EVERY == 0 {
                let ratio = (res.primal / res.dual.max(1e-30)).sqrt();
                if !(0.2..=5.0).contains(&ratio) && ratio.is_finite() {
                    let new_rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
                    if new_rho != rho {
                        kkt = build_kkt(sf, new_rho)?;
                    }
                }
            }
        }
    }
    Ok(RawSolution {
        x,
        s,
        y: dual(&y),
        status,
        iterations,
    })
}
