//! Primal-dual interior-point backend.
//!
//! Mehrotra predictor-corrector on
//!
//! ```text
//! minimize c'x  s.t.  A x = b (zero-cone rows),  G x + s = h,  s in K
//! ```
//!
//! with Nesterov-Todd scaling. Each Newton step eliminates `dz` and `ds` and
//! solves the quasi-definite system
//!
//! ```text
//! [ G'H^{-1}G + dI    A' ] [dx]   [rx]
//! [ A                -dI ] [dy] = [ry]
//! ```
//!
//! with the sparse `LDL'` kernel followed by iterative refinement. The PSD
//! blocks make `G'H^{-1}G` dense per cone, which is cheap because every cone
//! only touches the variables of one grid point.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, SymmetricEigen};

use super::csc::{dot, CscMatrix};
use super::ldl::{sym_upper_mul, LdlFactor};
use super::psd::{jordan, smat, sqrt_factor, svec, svec_len};
use super::{RawSolution, Residuals, SolverOptions, SolverStatus, StandardConicForm};
use crate::error::{Error, Result};

const STATIC_REG: f64 = 1e-11;
const STEP_FRACTION: f64 = 0.99;
const MAX_IPM_ITERS: usize = 200;
const REFINE_STEPS: usize = 20;

struct PsdLayout {
    /// Offset within the cone rows of `G`.
    off: usize,
    side: usize,
    cols: Vec<usize>,
    /// `mat(G[:, col])` restricted to this cone, one per entry of `cols`.
    mats: Vec<DMatrix<f64>>,
    /// KKT positions of the pairs `(cols[a], cols[b])`, `a <= b`.
    pair_pos: Vec<usize>,
}

struct NonnegLayout {
    cols: Vec<(usize, f64)>,
    pair_pos: Vec<usize>,
}

enum ConeScaling {
    Nonneg {
        w: Vec<f64>,
        lambda: Vec<f64>,
    },
    Psd {
        r: DMatrix<f64>,
        rinv: DMatrix<f64>,
        winv: DMatrix<f64>,
        lambda: Vec<f64>,
    },
}

#[derive(Clone, Copy)]
enum Op {
    /// `W v`
    W,
    /// `W' v`
    Wt,
    /// `W^{-T} v`
    WinvT,
    /// `H^{-1} v`
    Hinv,
}

struct Problem<'a> {
    n: usize,
    p: usize,
    l: usize,
    c: &'a [f64],
    a_eq: CscMatrix,
    b_eq: Vec<f64>,
    g: CscMatrix,
    h: Vec<f64>,
    psd: Vec<PsdLayout>,
    nonneg: Vec<NonnegLayout>,
    kkt: CscMatrix,
    diag_pos: Vec<usize>,
    /// KKT position of every stored entry of `a_eq`, in CSC order.
    at_pos: Vec<usize>,
    degree: f64,
}

fn find(kkt: &CscMatrix, row: usize, col: usize) -> usize {
    let r = kkt.colptr[col]..kkt.colptr[col + 1];
    let k = kkt.rowval[r.clone()]
        .binary_search(&row)
        .expect("entry missing from KKT pattern");
    r.start + k
}

impl<'a> Problem<'a> {
    fn new(sf: &'a StandardConicForm) -> Self {
        let n = sf.num_vars();
        let p = sf.cones.zero;
        let m = sf.num_rows();
        let l = sf.cones.nonneg;
        let a_eq = sf.a.row_slice(0, p);
        let g = sf.a.row_slice(p, m);
        let gt = g.transpose();

        // column lists of every nonneg row and PSD cone
        let nonneg_cols: Vec<Vec<(usize, f64)>> = (0..l).map(|r| gt.col(r).collect()).collect();
        let mut psd = Vec::new();
        let mut off = l;
        for &side in &sf.cones.psd {
            let len = svec_len(side);
            let mut cols = BTreeSet::new();
            for r in off..off + len {
                cols.extend(gt.col(r).map(|(j, _)| j));
            }
            let cols: Vec<usize> = cols.into_iter().collect();
            let mats = cols
                .iter()
                .map(|&j| {
                    let mut v = vec![0.0; len];
                    for (i, x) in g.col(j) {
                        if i >= off && i < off + len {
                            v[i - off] = x;
                        }
                    }
                    smat(&v, side)
                })
                .collect();
            psd.push(PsdLayout {
                off,
                side,
                cols,
                mats,
                pair_pos: Vec::new(),
            });
            off += len;
        }

        // KKT pattern (upper triangle)
        let dim = n + p;
        let mut pattern: Vec<BTreeSet<usize>> = (0..dim).map(|j| BTreeSet::from([j])).collect();
        let add_clique = |cols: &[usize], pattern: &mut Vec<BTreeSet<usize>>| {
            for (a, &i) in cols.iter().enumerate() {
                for &j in &cols[a..] {
                    pattern[i.max(j)].insert(i.min(j));
                }
            }
        };
        for cols in &nonneg_cols {
            let idx: Vec<usize> = cols.iter().map(|&(j, _)| j).collect();
            add_clique(&idx, &mut pattern);
        }
        for cone in &psd {
            add_clique(&cone.cols, &mut pattern);
        }
        for j in 0..n {
            for (r, _) in a_eq.col(j) {
                pattern[n + r].insert(j);
            }
        }
        let mut triplets = Vec::new();
        for (j, rows) in pattern.iter().enumerate() {
            for &i in rows {
                triplets.push((i, j, 1.0));
            }
        }
        let mut kkt = CscMatrix::from_triplets(dim, dim, &triplets);
        kkt.nzval.iter_mut().for_each(|v| *v = 0.0);

        let pairs = |cols: &[usize]| {
            let mut out = Vec::with_capacity(cols.len() * (cols.len() + 1) / 2);
            for (a, &i) in cols.iter().enumerate() {
                for &j in &cols[a..] {
                    out.push(find(&kkt, i.min(j), i.max(j)));
                }
            }
            out
        };
        let nonneg = nonneg_cols
            .into_iter()
            .map(|cols| {
                let idx: Vec<usize> = cols.iter().map(|&(j, _)| j).collect();
                NonnegLayout {
                    pair_pos: pairs(&idx),
                    cols,
                }
            })
            .collect();
        for cone in &mut psd {
            cone.pair_pos = pairs(&cone.cols);
        }
        let diag_pos = (0..dim).map(|j| find(&kkt, j, j)).collect();
        let mut at_pos = Vec::with_capacity(a_eq.nnz());
        for j in 0..n {
            for (r, _) in a_eq.col(j) {
                at_pos.push(find(&kkt, j, n + r));
            }
        }
        Self {
            n,
            p,
            l,
            c: &sf.c,
            b_eq: sf.b[..p].to_vec(),
            h: sf.b[p..].to_vec(),
            a_eq,
            g,
            psd,
            nonneg,
            kkt,
            diag_pos,
            at_pos,
            degree: sf.cones.degree().max(1) as f64,
        }
    }

    fn cone_len(&self) -> usize {
        self.h.len()
    }

    /// Fills the KKT values for the given scaling (`None` means `H = I`).
    fn fill_kkt(&mut self, scal: Option<&[ConeScaling]>) {
        let kkt = &mut self.kkt;
        kkt.nzval.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            kkt.nzval[self.diag_pos[j]] = STATIC_REG;
        }
        for r in 0..self.p {
            kkt.nzval[self.diag_pos[self.n + r]] = -STATIC_REG;
        }
        for (k, &pos) in self.at_pos.iter().enumerate() {
            kkt.nzval[pos] = self.a_eq.nzval[k];
        }
        // nonnegative rows: weight z/s, i.e. 1/w^2
        let nonneg_w: Option<&Vec<f64>> = scal.and_then(|s| match s.first() {
            Some(ConeScaling::Nonneg { w, .. }) => Some(w),
            _ => None,
        });
        for (r, row) in self.nonneg.iter().enumerate() {
            let weight = nonneg_w.map_or(1.0, |w| 1.0 / (w[r] * w[r]));
            let mut k = 0;
            for (a, &(_, ga)) in row.cols.iter().enumerate() {
                for &(_, gb) in &row.cols[a..] {
                    kkt.nzval[row.pair_pos[k]] += weight * ga * gb;
                    k += 1;
                }
            }
        }
        let psd_scal = scal.map(|s| &s[usize::from(self.l > 0)..]);
        for (ci, cone) in self.psd.iter().enumerate() {
            let winv = psd_scal.map(|s| match &s[ci] {
                ConeScaling::Psd { winv, .. } => winv,
                ConeScaling::Nonneg { .. } => unreachable!(),
            });
            let ys: Vec<DMatrix<f64>> = cone
                .mats
                .iter()
                .map(|m| match winv {
                    Some(wi) => wi * m * wi,
                    None => m.clone(),
                })
                .collect();
            let mut k = 0;
            for (a, y) in ys.iter().enumerate() {
                for mb in &cone.mats[a..] {
                    kkt.nzval[cone.pair_pos[k]] += y.dot(mb);
                    k += 1;
                }
            }
        }
    }

    fn scaling(&self, s: &[f64], z: &[f64]) -> Vec<ConeScaling> {
        let mut out = Vec::new();
        if self.l > 0 {
            let (s, z) = (&s[..self.l], &z[..self.l]);
            out.push(ConeScaling::Nonneg {
                w: s.iter().zip(z).map(|(s, z)| (s / z).sqrt()).collect(),
                lambda: s.iter().zip(z).map(|(s, z)| (s * z).sqrt()).collect(),
            });
        }
        for cone in &self.psd {
            let rng = cone.off..cone.off + svec_len(cone.side);
            let ls = sqrt_factor(&smat(&s[rng.clone()], cone.side), 1e-300);
            let lz = sqrt_factor(&smat(&z[rng], cone.side), 1e-300);
            let svd = (lz.transpose() * &ls).svd(true, true);
            let u = svd.u.unwrap();
            let vt = svd.v_t.unwrap();
            let lam: Vec<f64> = svd.singular_values.iter().map(|&x| x.max(1e-300)).collect();
            let isq = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                lam.len(),
                lam.iter().map(|x| 1.0 / x.sqrt()),
            ));
            let r = &ls * vt.transpose() * &isq;
            let rinv = &isq * u.transpose() * lz.transpose();
            let winv = rinv.transpose() * &rinv;
            out.push(ConeScaling::Psd {
                r,
                rinv,
                winv,
                lambda: lam,
            });
        }
        out
    }

    fn apply(&self, scal: &[ConeScaling], op: Op, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        let mut ci = 0;
        for sc in scal {
            match sc {
                ConeScaling::Nonneg { w, .. } => {
                    for i in 0..self.l {
                        out[i] = match op {
                            Op::W | Op::Wt => w[i] * v[i],
                            Op::WinvT => v[i] / w[i],
                            Op::Hinv => v[i] / (w[i] * w[i]),
                        };
                    }
                }
                ConeScaling::Psd {
                    r, rinv, winv, ..
                } => {
                    let cone = &self.psd[ci];
                    ci += 1;
                    let rng = cone.off..cone.off + svec_len(cone.side);
                    let m = smat(&v[rng.clone()], cone.side);
                    let res = match op {
                        Op::W => r.transpose() * m * r,
                        Op::Wt => r * m * r.transpose(),
                        Op::WinvT => rinv * m * rinv.transpose(),
                        Op::Hinv => winv * m * winv,
                    };
                    out[rng].copy_from_slice(&svec(&res));
                }
            }
        }
        out
    }

    /// Scaled-space vector `lambda`.
    fn lambda(&self, scal: &[ConeScaling]) -> Vec<f64> {
        let mut out = vec![0.0; self.cone_len()];
        let mut ci = 0;
        for sc in scal {
            match sc {
                ConeScaling::Nonneg { lambda, .. } => out[..self.l].copy_from_slice(lambda),
                ConeScaling::Psd { lambda, .. } => {
                    let cone = &self.psd[ci];
                    ci += 1;
                    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(lambda));
                    out[cone.off..cone.off + svec_len(cone.side)].copy_from_slice(&svec(&d));
                }
            }
        }
        out
    }

    /// Jordan product `u o v`.
    fn jordan(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for i in 0..self.l {
            out[i] = u[i] * v[i];
        }
        for cone in &self.psd {
            let rng = cone.off..cone.off + svec_len(cone.side);
            let j = jordan(&smat(&u[rng.clone()], cone.side), &smat(&v[rng.clone()], cone.side));
            out[rng].copy_from_slice(&svec(&j));
        }
        out
    }

    /// Solves `lambda o x = r` for diagonal `lambda`.
    fn lambda_solve(&self, scal: &[ConeScaling], r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; r.len()];
        let mut ci = 0;
        for sc in scal {
            match sc {
                ConeScaling::Nonneg { lambda, .. } => {
                    for i in 0..self.l {
                        out[i] = r[i] / lambda[i];
                    }
                }
                ConeScaling::Psd { lambda, .. } => {
                    let cone = &self.psd[ci];
                    ci += 1;
                    let rng = cone.off..cone.off + svec_len(cone.side);
                    let m = smat(&r[rng.clone()], cone.side);
                    let x = DMatrix::from_fn(cone.side, cone.side, |i, j| {
                        2.0 * m[(i, j)] / (lambda[i] + lambda[j])
                    });
                    out[rng].copy_from_slice(&svec(&x));
                }
            }
        }
        out
    }

    /// Identity element of the cone product.
    fn unit(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.cone_len()];
        e[..self.l].iter_mut().for_each(|v| *v = 1.0);
        for cone in &self.psd {
            let id = DMatrix::identity(cone.side, cone.side);
            e[cone.off..cone.off + svec_len(cone.side)].copy_from_slice(&svec(&id));
        }
        e
    }

    /// Smallest "eigenvalue" of `v` over all cones.
    fn min_eig(&self, v: &[f64]) -> f64 {
        let mut m = v[..self.l].iter().copied().fold(f64::INFINITY, f64::min);
        for cone in &self.psd {
            let rng = cone.off..cone.off + svec_len(cone.side);
            m = m.min(super::psd::min_eigenvalue(&smat(&v[rng], cone.side)));
        }
        m
    }

    /// Largest `alpha` with `lambda + alpha d` in the cone (scaled space).
    fn max_step(&self, scal: &[ConeScaling], d: &[f64]) -> f64 {
        let mut alpha = f64::INFINITY;
        let mut ci = 0;
        for sc in scal {
            match sc {
                ConeScaling::Nonneg { lambda, .. } => {
                    for i in 0..self.l {
                        if d[i] < 0.0 {
                            alpha = alpha.min(-lambda[i] / d[i]);
                        }
                    }
                }
                ConeScaling::Psd { lambda, .. } => {
                    let cone = &self.psd[ci];
                    ci += 1;
                    let rng = cone.off..cone.off + svec_len(cone.side);
                    let m = smat(&d[rng], cone.side);
                    let b = DMatrix::from_fn(cone.side, cone.side, |i, j| {
                        m[(i, j)] / (lambda[i] * lambda[j]).sqrt()
                    });
                    let e = SymmetricEigen::new(b).eigenvalues.min();
                    if e < 0.0 {
                        alpha = alpha.min(-1.0 / e);
                    }
                }
            }
        }
        alpha
    }

    fn kkt_matvec(&self, v: &[f64], out: &mut [f64]) {
        sym_upper_mul(&self.kkt, v, out);
        // remove the static regularization: refinement targets the true system
        for j in 0..self.n {
            out[j] -= STATIC_REG * v[j];
        }
        for r in 0..self.p {
            out[self.n + r] += STATIC_REG * v[self.n + r];
        }
    }

    fn solve_kkt(&self, ldl: &LdlFactor, rhs: &[f64]) -> Vec<f64> {
        let mut sol = rhs.to_vec();
        ldl.solve(&mut sol);
        let mut resid = vec![0.0; rhs.len()];
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut last = f64::INFINITY;
        for _ in 0..REFINE_STEPS {
            self.kkt_matvec(&sol, &mut resid);
            resid.iter_mut().zip(rhs).for_each(|(r, b)| *r = b - *r);
            let e = norm(&resid);
            if e <= 1e-14 * (1.0 + norm(rhs)) || e >= last {
                break;
            }
            last = e;
            ldl.solve(&mut resid);
            sol.iter_mut().zip(&resid).for_each(|(s, d)| *s += d);
        }
        sol
    }

    fn g_mul(&self, x: &[f64]) -> Vec<f64> {
        self.g.mul_vec(x)
    }

    fn gt_mul(&self, z: &[f64]) -> Vec<f64> {
        self.g.mul_t_vec(z)
    }
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
}

/// One Newton solve: residual targets scaled by `(1 - eta)`, complementarity
/// right-hand side `d` given in scaled space.
#[allow(clippy::too_many_arguments)]
fn newton(
    pb: &Problem,
    ldl: &LdlFactor,
    scal: &[ConeScaling],
    rx: &[f64],
    ry: &[f64],
    rz: &[f64],
    eta: f64,
    d: &[f64],
) -> Direction {
    let wtd = pb.apply(scal, Op::Wt, d);
    let t: Vec<f64> = rz.iter().zip(&wtd).map(|(r, w)| (1.0 - eta) * r + w).collect();
    let hit = pb.apply(scal, Op::Hinv, &t);
    let gthit = pb.gt_mul(&hit);
    let mut rhs = Vec::with_capacity(pb.n + pb.p);
    rhs.extend(rx.iter().zip(&gthit).map(|(r, g)| -(1.0 - eta) * r - g));
    rhs.extend(ry.iter().map(|r| -(1.0 - eta) * r));
    let sol = pb.solve_kkt(ldl, &rhs);
    let dx = sol[..pb.n].to_vec();
    let dy = sol[pb.n..].to_vec();
    let gdx = pb.g_mul(&dx);
    let u: Vec<f64> = gdx.iter().zip(&t).map(|(a, b)| a + b).collect();
    let dz = pb.apply(scal, Op::Hinv, &u);
    // ds from the linear equation rather than `W'd - H dz`: H is badly
    // conditioned near the boundary and the round trip loses feasibility
    let ds = gdx.iter().zip(rz).map(|(g, r)| -g - (1.0 - eta) * r).collect();
    Direction { dx, dy, dz, ds }
}

pub(crate) fn solve(
    sf: &StandardConicForm,
    opts: &SolverOptions,
    check: &dyn Fn(&[f64], &[f64], &[f64]) -> Residuals,
) -> Result<RawSolution> {
    let mut pb = Problem::new(sf);
    let (n, p) = (pb.n, pb.p);
    let mut signs = vec![1.0; n];
    signs.extend(std::iter::repeat_n(-1.0, p));
    let mut ldl = LdlFactor::new(&pb.kkt, signs)?;
    let e = pb.unit();

    // starting point: least-norm slack and dual with H = I, then shifted
    // into the cone interior
    pb.fill_kkt(None);
    ldl.factor(&pb.kkt)?;
    let mut rhs = pb.gt_mul(&pb.h);
    rhs.extend_from_slice(&pb.b_eq);
    let sol = pb.solve_kkt(&ldl, &rhs);
    let mut x = sol[..n].to_vec();
    let gx = pb.g_mul(&x);
    let mut s: Vec<f64> = pb.h.iter().zip(&gx).map(|(h, g)| h - g).collect();
    let mut rhs: Vec<f64> = pb.c.iter().map(|c| -c).collect();
    rhs.extend(std::iter::repeat_n(0.0, p));
    let sol = pb.solve_kkt(&ldl, &rhs);
    let mut y = sol[n..].to_vec();
    let mut z = pb.g_mul(&sol[..n]);
    for v in [&mut s, &mut z] {
        let nrm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let t = -pb.min_eig(v);
        if t >= -1e-8 * nrm.max(1.0) {
            let a = 1.0 + t;
            v.iter_mut().zip(&e).for_each(|(v, e)| *v += a * e);
        }
    }

    let full = |s: &[f64], y: &[f64], z: &[f64]| {
        let mut sf_s = vec![0.0; p];
        sf_s.extend_from_slice(s);
        let mut sf_y = y.to_vec();
        sf_y.extend_from_slice(z);
        (sf_s, sf_y)
    };

    let max_iters = opts.max_iters.min(MAX_IPM_ITERS);
    let mut status = SolverStatus::MaxIters;
    let mut iterations = 0;
    let mut stalls = 0;
    // best iterate by worst tolerance ratio, returned when the run ends
    // without converging
    let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    for it in 0..=max_iters {
        iterations = it;
        if x.iter().chain(&s).chain(&y).chain(&z).any(|v| !v.is_finite()) {
            break;
        }
        let (fs, fy) = full(&s, &y, &z);
        let res = check(&x, &fs, &fy);
        let m = res.merit(opts);
        if best.as_ref().is_none_or(|b| m < b.0) {
            best = Some((m, x.clone(), s.clone(), y.clone(), z.clone()));
        }
        if res.within(opts) {
            status = SolverStatus::Optimal;
            break;
        }
        if it == max_iters {
            break;
        }
        if let Some(st) = infeasibility(&pb, &y, &z) {
            status = st;
            break;
        }

        // residuals
        let mut rx = pb.a_eq.mul_t_vec(&y);
        pb.g.gemv_t(1.0, &z, &mut rx);
        rx.iter_mut().zip(pb.c).for_each(|(r, c)| *r += c);
        let ry: Vec<f64> = pb.a_eq.mul_vec(&x).iter().zip(&pb.b_eq).map(|(a, b)| a - b).collect();
        let gx = pb.g_mul(&x);
        let rz: Vec<f64> = gx.iter().zip(&s).zip(&pb.h).map(|((g, s), h)| g + s - h).collect();
        let mu = dot(&s, &z) / pb.degree;

        let scal = pb.scaling(&s, &z);
        pb.fill_kkt(Some(&scal));
        if ldl.factor(&pb.kkt).is_err() {
            break;
        }
        let lam = pb.lambda(&scal);

        // predictor
        let d_aff: Vec<f64> = lam.iter().map(|l| -l).collect();
        let aff = newton(&pb, &ldl, &scal, &rx, &ry, &rz, 0.0, &d_aff);
        let ds_t = pb.apply(&scal, Op::WinvT, &aff.ds);
        let dz_t = pb.apply(&scal, Op::W, &aff.dz);
        let a_aff = pb.max_step(&scal, &ds_t).min(pb.max_step(&scal, &dz_t)).min(1.0);
        let sigma = (1.0 - a_aff).powi(3).clamp(0.0, 1.0);

        // corrector
        let ll = pb.jordan(&lam, &lam);
        let cross = pb.jordan(&ds_t, &dz_t);
        let rc: Vec<f64> = (0..lam.len())
            .map(|i| -ll[i] - cross[i] + sigma * mu * e[i])
            .collect();
        let d = pb.lambda_solve(&scal, &rc);
        let dir = newton(&pb, &ldl, &scal, &rx, &ry, &rz, sigma, &d);
        let ds_t = pb.apply(&scal, Op::WinvT, &dir.ds);
        let dz_t = pb.apply(&scal, Op::W, &dir.dz);
        let amax = pb.max_step(&scal, &ds_t).min(pb.max_step(&scal, &dz_t));
        let alpha = (STEP_FRACTION * amax).min(1.0);
        if alpha < 1e-10 {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
        for (v, d) in x.iter_mut().zip(&dir.dx) {
            *v += alpha * d;
        }
        for (v, d) in y.iter_mut().zip(&dir.dy) {
            *v += alpha * d;
        }
        for (v, d) in z.iter_mut().zip(&dir.dz) {
            *v += alpha * d;
        }
        for (v, d) in s.iter_mut().zip(&dir.ds) {
            *v += alpha * d;
        }
    }
    if status == SolverStatus::MaxIters {
        match best {
            Some((_, bx, bs, by, bz)) => (x, s, y, z) = (bx, bs, by, bz),
            None => return Err(Error::Numerical("interior-point iterate became non-finite".into())),
        }
    }
    let (fs, fy) = full(&s, &y, &z);
    Ok(RawSolution {
        x,
        s: fs,
        y: fy,
        status,
        iterations,
    })
}

/// A crude primal-infeasibility test: a dual ray `(y, z)` with
/// `A'y + G'z ~ 0` and `b'y + h'z < 0` whose norm has blown up.
fn infeasibility(pb: &Problem, y: &[f64], z: &[f64]) -> Option<SolverStatus> {
    let nrm = y.iter().chain(z).fold(0.0f64, |m, v| m.max(v.abs()));
    if nrm < 1e8 {
        return None;
    }
    let mut r = pb.a_eq.mul_t_vec(y);
    pb.g.gemv_t(1.0, z, &mut r);
    let ray = r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / nrm;
    let obj = (dot(&pb.b_eq, y) + dot(&pb.h, z)) / nrm;
    (ray < 1e-8 && obj < -1e-6).then_some(SolverStatus::Infeasible)
}
