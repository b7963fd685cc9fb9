//! Conic solver layer.
//!
//! Programs are converted to the standard form
//!
//! ```text
//! minimize  c'x + c0   subject to  A x + s = b,  s in K
//! K = {0}^p x R+^l x S+(s_1) x ... x S+(s_q)
//! ```
//!
//! with PSD cones stored as scaled triangles (see [`psd`]). The dual is
//! `A'y + c = 0, y in K*` and the duality gap is `c'x + b'y`.
//!
//! Two embedded backends share the sparse `LDL'` kernel: a primal-dual
//! interior-point method (default) and an operator-splitting method. Any
//! other solver can be plugged in through [`ConicBackend`].

mod admm;
pub mod csc;
mod ipm;
pub mod ldl;
pub mod psd;
mod presolve;
mod scaling;
pub mod textfmt;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relaxation::ConicProgram;
pub use csc::CscMatrix;
pub use psd::{project_psd, smat, svec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    MaxIters,
    Infeasible,
}

impl fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverStatus::Optimal => "optimal",
            SolverStatus::MaxIters => "max_iters",
            SolverStatus::Infeasible => "infeasible",
        })
    }
}

/// Relative residuals of a primal-dual pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl Residuals {
    pub fn within(&self, opts: &SolverOptions) -> bool {
        self.primal <= opts.eps_primal && self.dual <= opts.eps_dual && self.gap <= opts.eps_gap
    }

    /// Worst ratio of residual to tolerance (`<= 1` means within tolerance).
    pub fn merit(&self, opts: &SolverOptions) -> f64 {
        (self.primal / opts.eps_primal)
            .max(self.dual / opts.eps_dual)
            .max(self.gap / opts.eps_gap)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    #[default]
    InteriorPoint,
    OperatorSplitting,
}

impl std::str::FromStr for SolverMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ipm" | "interior_point" | "interior-point" => Ok(Self::InteriorPoint),
            "admm" | "operator_splitting" | "operator-splitting" => Ok(Self::OperatorSplitting),
            _ => Err(Error::Parse(format!("unknown solver method '{s}' (expected ipm or admm)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub eps_gap: f64,
    pub max_iters: usize,
    /// Relaxation parameter of the operator-splitting backend, in (1, 2).
    pub over_relaxation: f64,
    /// Ruiz equilibration before solving.
    pub scaling: bool,
    pub method: SolverMethod,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            eps_primal: 1e-6,
            eps_dual: 1e-6,
            eps_gap: 1e-6,
            max_iters: 50_000,
            over_relaxation: 1.5,
            scaling: true,
            method: SolverMethod::InteriorPoint,
        }
    }
}

impl SolverOptions {
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.eps_primal = tol;
        self.eps_dual = tol;
        self.eps_gap = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let tols = [self.eps_primal, self.eps_dual, self.eps_gap];
        if tols.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::Validation("solver tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Validation("max_iters must be at least 1".into()));
        }
        if !(self.over_relaxation > 1.0 && self.over_relaxation < 2.0) {
            return Err(Error::Validation("over_relaxation must lie in (1, 2)".into()));
        }
        Ok(())
    }
}

/// Dimensions of the cone product, in row order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeDims {
    pub zero: usize,
    pub nonneg: usize,
    /// Side lengths of the PSD cones.
    pub psd: Vec<usize>,
}

impl ConeDims {
    pub fn total(&self) -> usize {
        self.zero + self.nonneg + self.psd.iter().map(|&s| psd::svec_len(s)).sum::<usize>()
    }

    /// Row offset of every PSD cone.
    pub fn psd_offsets(&self) -> Vec<usize> {
        let mut off = self.zero + self.nonneg;
        self.psd
            .iter()
            .map(|&s| {
                let o = off;
                off += psd::svec_len(s);
                o
            })
            .collect()
    }

    /// Barrier degree `l + sum s_k`.
    pub fn degree(&self) -> usize {
        self.nonneg + self.psd.iter().sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardConicForm {
    pub c: Vec<f64>,
    pub c0: f64,
    pub a: CscMatrix,
    pub b: Vec<f64>,
    pub cones: ConeDims,
}

impl StandardConicForm {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn check(&self) -> Result<()> {
        let (m, n) = (self.b.len(), self.c.len());
        if self.a.nrows != m || self.a.ncols != n || self.cones.total() != m {
            return Err(Error::Validation(format!(
                "standard form dimensions disagree: A is {}x{}, b has {m}, c has {n}, cones cover {}",
                self.a.nrows,
                self.a.ncols,
                self.cones.total()
            )));
        }
        Ok(())
    }

    /// Euclidean projection onto `K` in place.
    pub fn project_cone(&self, v: &mut [f64]) {
        let z = self.cones.zero;
        v[..z].iter_mut().for_each(|x| *x = 0.0);
        v[z..z + self.cones.nonneg].iter_mut().for_each(|x| *x = x.max(0.0));
        for (&s, off) in self.cones.psd.iter().zip(self.cones.psd_offsets()) {
            psd::project_psd_svec(&mut v[off..off + psd::svec_len(s)], s);
        }
    }

    /// Euclidean projection onto the dual cone `K*` (zero cone is free).
    pub fn project_dual_cone(&self, v: &mut [f64]) {
        let z = self.cones.zero;
        v[z..z + self.cones.nonneg].iter_mut().for_each(|x| *x = x.max(0.0));
        for (&s, off) in self.cones.psd.iter().zip(self.cones.psd_offsets()) {
            psd::project_psd_svec(&mut v[off..off + psd::svec_len(s)], s);
        }
    }

    /// Relative residuals of `(x, s, y)`, computed from the problem data
    /// alone. Cone violations of `s` and `y` count toward the primal and dual
    /// residuals.
    pub fn residuals(&self, x: &[f64], s: &[f64], y: &[f64]) -> Residuals {
        use csc::{dot, norm_inf};
        let ax = self.a.mul_vec(x);
        let rp: Vec<f64> = ax.iter().zip(s).zip(&self.b).map(|((a, s), b)| a + s - b).collect();
        let mut sp = s.to_vec();
        self.project_cone(&mut sp);
        let s_dist = norm_inf(&sp.iter().zip(s).map(|(p, q)| p - q).collect::<Vec<_>>());
        let aty = self.a.mul_t_vec(y);
        let rd: Vec<f64> = aty.iter().zip(&self.c).map(|(a, c)| a + c).collect();
        let mut yp = y.to_vec();
        self.project_dual_cone(&mut yp);
        let y_dist = norm_inf(&yp.iter().zip(y).map(|(p, q)| p - q).collect::<Vec<_>>());
        let pscale = 1f64.max(norm_inf(&ax)).max(norm_inf(s)).max(norm_inf(&self.b));
        let dscale = 1f64.max(norm_inf(&aty)).max(norm_inf(&self.c));
        let (pobj, dobj) = (dot(&self.c, x), -dot(&self.b, y));
        Residuals {
            primal: norm_inf(&rp).max(s_dist) / pscale,
            dual: norm_inf(&rd).max(y_dist) / dscale,
            gap: (pobj - dobj).abs() / 1f64.max(pobj.abs()).max(dobj.abs()),
        }
    }
}

/// Maps program variables to standard-form columns: `value = x[i] * scale[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableMap {
    pub scale: Vec<f64>,
}

impl VariableMap {
    pub fn to_program(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.scale).map(|(v, s)| v * s).collect()
    }

    pub fn to_solver(&self, values: &[f64]) -> Vec<f64> {
        values.iter().zip(&self.scale).map(|(v, s)| v / s).collect()
    }
}

/// Vectorizes `p`: equalities become zero-cone rows, inequalities
/// nonnegative rows and every PSD block one PSD cone.
pub fn to_standard_form(p: &ConicProgram) -> Result<(StandardConicForm, VariableMap)> {
    p.validate()?;
    let n = p.num_variables();
    let scale = &p.variable_scale;
    let mut triplets = Vec::new();
    let mut b = Vec::new();
    // equality e(x) = a'x + c0 = 0    ->  a'x + s = -c0,  s = 0
    for e in &p.equalities {
        let row = b.len();
        triplets.extend(e.terms.iter().map(|&(j, c)| (row, j, c * scale[j])));
        b.push(-e.constant);
    }
    // inequality e(x) >= 0          -> -a'x + s = c0,  s >= 0
    for e in &p.inequalities {
        let row = b.len();
        triplets.extend(e.terms.iter().map(|&(j, c)| (row, j, -c * scale[j])));
        b.push(e.constant);
    }
    // PSD block M(x) = M0 + sum x_j M_j -> -svec(M_j) x + s = svec(M0)
    for blk in &p.psd_blocks {
        for (k, e) in blk.entries.iter().enumerate() {
            let (r, q) = psd::svec_pair(blk.size, k);
            let w = if r == q { 1.0 } else { psd::SQRT2 };
            let row = b.len();
            triplets.extend(e.terms.iter().map(|&(j, c)| (row, j, -w * c * scale[j])));
            b.push(w * e.constant);
        }
    }
    let m = b.len();
    let c = p
        .objective
        .terms
        .iter()
        .fold(vec![0.0; n], |mut c, &(j, v)| {
            c[j] = v * scale[j];
            c
        });
    let sf = StandardConicForm {
        c,
        c0: p.objective.constant,
        a: CscMatrix::from_triplets(m, n, &triplets),
        b,
        cones: ConeDims {
            zero: p.equalities.len(),
            nonneg: p.inequalities.len(),
            psd: p.psd_blocks.iter().map(|b| b.size).collect(),
        },
    };
    Ok((sf, VariableMap { scale: scale.clone() }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub status: SolverStatus,
    pub residuals: Residuals,
    pub iterations: usize,
    /// `c'x + c0`.
    pub primal_objective: f64,
    /// `-b'y + c0`.
    pub dual_objective: f64,
}

/// A conic solver usable by the relaxation layer.
pub trait ConicBackend {
    fn name(&self) -> &str;
    fn solve(&self, sf: &StandardConicForm, opts: &SolverOptions) -> Result<ConicSolution>;
}

/// The solvers shipped with this crate, selected by [`SolverOptions::method`].
#[derive(Clone, Copy, Debug, Default)]
pub struct EmbeddedSolver;

impl ConicBackend for EmbeddedSolver {
    fn name(&self) -> &str {
        "embedded"
    }

    fn solve(&self, sf: &StandardConicForm, opts: &SolverOptions) -> Result<ConicSolution> {
        solve(sf, opts)
    }
}

/// Solves `sf` with the embedded backend chosen by `opts.method`.
///
/// The returned residuals are always recomputed from the original data, not
/// taken from the solver's internal (scaled) state.
pub fn solve(sf: &StandardConicForm, opts: &SolverOptions) -> Result<ConicSolution> {
    sf.check()?;
    opts.validate()?;
    let full = solve_form(sf, opts);
    if matches!(full, Ok(ref f) if f.status == SolverStatus::Optimal) {
        return full;
    }
    // Retry without the variables that only loosen a PSD diagonal. The
    // reduced program has the same dual, so its value is still a valid
    // bound, but it drops the unbounded face that stalls the full solve.
    let Some(pre) = presolve::presolve(sf) else {
        return full;
    };
    let reduced = solve_form(&pre.reduced, opts).map(|r| {
        let (x, s, y) = pre.restore(sf, &r.x, &r.s, &r.y);
        finish(sf, opts, x, s, y, r.status, r.iterations)
    });
    match (full, reduced) {
        (Ok(f), Ok(r)) => {
            let merit = |c: &ConicSolution| c.residuals.merit(opts);
            let iterations = f.iterations + r.iterations;
            let mut best = if r.status == SolverStatus::Optimal || merit(&r) < merit(&f) { r } else { f };
            best.iterations = iterations;
            Ok(best)
        }
        (Ok(f), Err(_)) => Ok(f),
        (Err(_), r) => r,
    }
}

fn solve_form(sf: &StandardConicForm, opts: &SolverOptions) -> Result<ConicSolution> {
    let eq = if opts.scaling {
        scaling::Equilibration::ruiz(sf, 25)
    } else {
        scaling::Equilibration::identity(sf)
    };
    let scaled = eq.apply(sf);
    let check = |xs: &[f64], ss: &[f64], ys: &[f64]| {
        let (x, s, y) = eq.unscale(xs, ss, ys);
        sf.residuals(&x, &s, &y)
    };
    let raw = match opts.method {
        SolverMethod::InteriorPoint => ipm::solve(&scaled, opts, &check)?,
        SolverMethod::OperatorSplitting => admm::solve(&scaled, opts, &check)?,
    };
    let (x, s, y) = eq.unscale(&raw.x, &raw.s, &raw.y);
    Ok(finish(sf, opts, x, s, y, raw.status, raw.iterations))
}

/// Re-verifies residuals on the unscaled data and packages the result.
fn finish(
    sf: &StandardConicForm,
    opts: &SolverOptions,
    x: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
    status: SolverStatus,
    iterations: usize,
) -> ConicSolution {
    let residuals = sf.residuals(&x, &s, &y);
    let mut status = status;
    if status == SolverStatus::Optimal && !residuals.within(opts) {
        status = SolverStatus::MaxIters;
    }
    let primal_objective = csc::dot(&sf.c, &x) + sf.c0;
    let dual_objective = -csc::dot(&sf.b, &y) + sf.c0;
    ConicSolution {
        x,
        s,
        y,
        status,
        residuals,
        iterations,
        primal_objective,
        dual_objective,
    }
}

/// Iterate handed back by a backend (in scaled coordinates).
pub(crate) struct RawSolution {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub status: SolverStatus,
    pub iterations: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp_min_x() -> StandardConicForm {
        // min x  s.t. x >= 0   ->  -x + s = 0, s >= 0
        StandardConicForm {
            c: vec![1.0],
            c0: 0.0,
            a: CscMatrix::from_triplets(1, 1, &[(0, 0, -1.0)]),
            b: vec![0.0],
            cones: ConeDims {
                zero: 0,
                nonneg: 1,
                psd: vec![],
            },
        }
    }

    /// min 2 M12 s.t. M11 = 1, M22 = 1, M PSD; variables (M11, M12, M22).
    fn boundary_sdp() -> StandardConicForm {
        let r2 = psd::SQRT2;
        let t = [
            (0, 0, 1.0),
            (1, 2, 1.0),
            (2, 0, -1.0),
            (3, 1, -r2),
            (4, 2, -1.0),
        ];
        StandardConicForm {
            c: vec![0.0, 2.0, 0.0],
            c0: 0.0,
            a: CscMatrix::from_triplets(5, 3, &t),
            b: vec![1.0, 1.0, 0.0, 0.0, 0.0],
            cones: ConeDims {
                zero: 2,
                nonneg: 0,
                psd: vec![2],
            },
        }
    }

    fn both_methods() -> [SolverOptions; 2] {
        [
            SolverOptions::default(),
            SolverOptions {
                method: SolverMethod::OperatorSplitting,
                ..SolverOptions::default()
            },
        ]
    }

    #[test]
    fn lp_trivial() {
        for opts in both_methods() {
            let sol = solve(&lp_min_x(), &opts).unwrap();
            assert_eq!(sol.status, SolverStatus::Optimal, "{:?}", opts.method);
            assert!(sol.x[0].abs() < 1e-6);
        }
    }

    #[test]
    fn boundary_sdp_hits_minus_two() {
        for opts in both_methods() {
            let sol = solve(&boundary_sdp(), &opts).unwrap();
            assert_eq!(sol.status, SolverStatus::Optimal, "{:?}", opts.method);
            assert!((sol.primal_objective + 2.0).abs() < 1e-5, "{:?}", sol.primal_objective);
            assert!((sol.x[1] + 1.0).abs() < 1e-4);
            assert!(sol.residuals.within(&opts));
        }
    }

    #[test]
    fn cone_dims() {
        let d = ConeDims {
            zero: 2,
            nonneg: 3,
            psd: vec![3, 2],
        };
        assert_eq!(d.total(), 2 + 3 + 6 + 3);
        assert_eq!(d.psd_offsets(), vec![5, 11]);
        assert_eq!(d.degree(), 8);
    }

    #[test]
    fn options_validation() {
        assert!(SolverOptions::default().validate().is_ok());
        let bad = SolverOptions {
            over_relaxation: 2.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!("ipm".parse::<SolverMethod>().is_ok());
        assert!("simplex".parse::<SolverMethod>().is_err());
    }
}
