//! Time-discretized moment relaxation.
//!
//! On a uniform grid `t_0 < ... < t_N` every moment in the moment-matrix index
//! set becomes a variable per grid point. The program contains
//!
//! * the initial conditions `mu_0[x^k] = x0^k`,
//! * the discretized moment dynamics for `k = 1..K`,
//! * the moment inequalities `<b_l^r> >= 0` at every grid point,
//! * one PSD moment matrix per grid point,
//!
//! and minimizes the quadrature of the running cost plus the terminal cost
//! (negated for maximization). Its optimum is a lower bound on the optimal
//! expected cost of every Markov policy.

mod program;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use program::{AffineExpr, ConicProgram, PsdBlock};

use crate::conic::{self, ConicBackend, Residuals, SolverOptions, SolverStatus};
use crate::error::{Error, Result};
use crate::moments::{
    auto_size, build_system, constraint_power_fits, equation_fits, matrix_index_set, moment_basis,
    LinearMomentExpr, MomentKey, MomentSystem,
};
use crate::poly::{Polynomial, DEFAULT_DEGREE_CAP};

/// A scalar polynomial stochastic control problem
///
/// ```text
/// minimize  E[ int_0^T c(x,u) dt + h(x_T) ]
/// dx = f(x,u) dt + g(x,u) dw,   x_0 = x0,   b_l(x,u) >= 0
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub drift: Polynomial,
    pub diffusion: Polynomial,
    pub running_cost: Polynomial,
    pub terminal_cost: Polynomial,
    pub constraints: Vec<Polynomial>,
    pub horizon: f64,
    pub x0: f64,
    pub maximize: bool,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Validation(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !self.x0.is_finite() {
            return Err(Error::Validation("x0 must be finite".into()));
        }
        if self.terminal_cost.degree_u() > 0 {
            return Err(Error::Validation("terminal cost must not depend on u".into()));
        }
        let polys = [&self.drift, &self.diffusion, &self.running_cost, &self.terminal_cost];
        let finite = polys
            .into_iter()
            .chain(&self.constraints)
            .all(|p| p.terms().all(|(_, c)| c.is_finite()));
        if !finite {
            return Err(Error::Validation("polynomial coefficients must be finite".into()));
        }
        Ok(())
    }

    /// `+1` for minimization, `-1` for maximization.
    pub fn sense(&self) -> f64 {
        if self.maximize {
            -1.0
        } else {
            1.0
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Explicit Euler dynamics and left Riemann sum for the running cost.
    Euler,
    /// Trapezoid rule for both dynamics and running cost.
    #[default]
    Trapezoid,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::Trapezoid => "trapezoid",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "trapezoid" => Ok(Scheme::Trapezoid),
            _ => Err(Error::Parse(format!("unknown scheme '{s}' (expected euler or trapezoid)"))),
        }
    }
}

pub const DEFAULT_STEPS: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelaxationConfig {
    pub dx: u32,
    pub du: u32,
    /// Number of state-moment equations `K`.
    pub order: u32,
    /// Constraint powers `r_l`, one per constraint.
    pub powers: Vec<u32>,
    /// Number of time steps `N`.
    pub steps: usize,
    pub scheme: Scheme,
}

impl RelaxationConfig {
    /// Automatically sized configuration with default grid and scheme.
    pub fn auto(spec: &ProblemSpec, dx: u32, du: u32) -> Result<Self> {
        let s = auto_size(dx, du, &spec.drift, &spec.diffusion, &spec.constraints)?;
        Ok(Self {
            dx,
            du,
            order: s.order,
            powers: s.powers,
            steps: DEFAULT_STEPS,
            scheme: Scheme::default(),
        })
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// Explicit `K` and `r_l` overrides, checked against the moment matrix.
    pub fn with_overrides(
        mut self,
        spec: &ProblemSpec,
        order: Option<u32>,
        powers: Option<Vec<u32>>,
    ) -> Result<Self> {
        if let Some(k) = order {
            self.order = k;
        }
        if let Some(r) = powers {
            self.powers = r;
        }
        self.validate(spec)?;
        Ok(self)
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::Validation("the time grid needs at least 2 steps".into()));
        }
        if self.dx == 0 || self.du == 0 || self.order == 0 {
            return Err(Error::Sizing("d_x, d_u and K must be at least 1".into()));
        }
        if self.powers.len() != spec.constraints.len() {
            return Err(Error::Sizing(format!(
                "{} constraint powers given for {} constraints",
                self.powers.len(),
                spec.constraints.len()
            )));
        }
        let index = matrix_index_set(self.dx, self.du);
        for k in 1..=self.order {
            if !equation_fits(k, &spec.drift, &spec.diffusion, &index) {
                return Err(Error::Sizing(format!(
                    "K={} exceeds what the d_x={}, d_u={} moment matrix supports (equation {k})",
                    self.order, self.dx, self.du
                )));
            }
        }
        for (l, (&r, b)) in self.powers.iter().zip(&spec.constraints).enumerate() {
            if r == 0 {
                return Err(Error::Sizing(format!("constraint power for constraint {l} is 0")));
            }
            for q in 1..=r {
                if !constraint_power_fits(b, q, &index)? {
                    return Err(Error::Sizing(format!(
                        "power {q} of constraint {l} needs moments outside the moment matrix"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dt(&self, spec: &ProblemSpec) -> f64 {
        spec.horizon / self.steps as f64
    }

    pub fn grid(&self, spec: &ProblemSpec) -> Vec<f64> {
        let dt = self.dt(spec);
        (0..=self.steps).map(|n| n as f64 * dt).collect()
    }

    /// Quadrature weights (in units of `dt`) of the running cost.
    fn cost_weights(&self) -> Vec<f64> {
        let n = self.steps;
        (0..=n)
            .map(|i| match self.scheme {
                Scheme::Euler => f64::from(u8::from(i < n)),
                Scheme::Trapezoid if i == 0 || i == n => 0.5,
                Scheme::Trapezoid => 1.0,
            })
            .collect()
    }
}

/// The moment linearization of `b^r`.
pub fn expand_constraint_moment(b: &Polynomial, r: u32) -> Result<LinearMomentExpr> {
    Ok(LinearMomentExpr::from_polynomial(&b.checked_pow(r, DEFAULT_DEGREE_CAP)?))
}

/// Variable layout: grid-major, keys in sorted order within each grid point.
#[derive(Clone, Debug)]
pub struct VariableLayout {
    keys: Vec<MomentKey>,
    position: BTreeMap<MomentKey, usize>,
}

impl VariableLayout {
    pub fn new(dx: u32, du: u32) -> Self {
        let keys: Vec<_> = matrix_index_set(dx, du)
            .into_iter()
            .filter(|k| !k.is_constant())
            .collect();
        let position = keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        Self { keys, position }
    }

    pub fn keys(&self) -> &[MomentKey] {
        &self.keys
    }

    pub fn index(&self, time: usize, key: MomentKey) -> Option<usize> {
        self.position.get(&key).map(|p| time * self.keys.len() + p)
    }

    fn expr(&self, time: usize, e: &LinearMomentExpr, context: &str) -> Result<AffineExpr> {
        let mut terms = Vec::with_capacity(e.len());
        for (k, c) in e.terms() {
            let i = self.index(time, k).ok_or_else(|| Error::Degree {
                key: k,
                context: context.to_string(),
            })?;
            terms.push((i, c));
        }
        Ok(AffineExpr::from_terms(terms, e.constant()))
    }
}

/// Power-of-two scale close to `max(1, |x0|)^i`.
fn variable_scale(x0: f64, key: MomentKey) -> f64 {
    let base = x0.abs().max(1.0).log2();
    2f64.powi((f64::from(key.x) * base).round() as i32)
}

pub fn assemble(spec: &ProblemSpec, cfg: &RelaxationConfig) -> Result<ConicProgram> {
    spec.validate()?;
    cfg.validate(spec)?;
    let layout = VariableLayout::new(cfg.dx, cfg.du);
    let n = cfg.steps;
    let dt = cfg.dt(spec);
    let system = build_system(cfg.order, &spec.drift, &spec.diffusion);

    let mut p = ConicProgram::default();
    for t in 0..=n {
        for &k in layout.keys() {
            p.variables.push((t, k));
            p.variable_scale.push(variable_scale(spec.x0, k));
        }
    }

    // objective
    let cost = LinearMomentExpr::from_polynomial(&spec.running_cost);
    let term = LinearMomentExpr::from_polynomial(&spec.terminal_cost);
    let mut obj_terms = Vec::new();
    let mut obj_const = 0.0;
    for (t, w) in cfg.cost_weights().into_iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let e = layout.expr(t, &cost.scale(w * dt), "running cost")?;
        obj_terms.extend(e.terms);
        obj_const += e.constant;
    }
    let e = layout.expr(n, &term, "terminal cost")?;
    obj_terms.extend(e.terms);
    obj_const += e.constant;
    let sense = spec.sense();
    p.objective = AffineExpr::from_terms(
        obj_terms.into_iter().map(|(i, c)| (i, sense * c)),
        sense * obj_const,
    );

    // initial conditions
    for k in 1..=cfg.order {
        let i = layout.index(0, MomentKey::state(k)).ok_or_else(|| Error::Degree {
            key: MomentKey::state(k),
            context: "initial condition".into(),
        })?;
        p.equalities
            .push(AffineExpr::from_terms([(i, 1.0)], -spec.x0.powi(k as i32)));
    }
    // dynamics
    for t in 0..n {
        for (k, rhs) in system.equations() {
            let key = MomentKey::state(k);
            let now = layout.index(t, key).expect("state moment in layout");
            let next = layout.index(t + 1, key).expect("state moment in layout");
            let mut terms = vec![(next, 1.0), (now, -1.0)];
            let mut constant = 0.0;
            let parts: &[(usize, f64)] = match cfg.scheme {
                Scheme::Euler => &[(t, 1.0)],
                Scheme::Trapezoid => &[(t, 0.5), (t + 1, 0.5)],
            };
            for &(time, w) in parts {
                let e = layout.expr(time, &rhs.scale(-w * dt), "moment dynamics")?;
                terms.extend(e.terms);
                constant += e.constant;
            }
            p.equalities.push(AffineExpr::from_terms(terms, constant));
        }
    }

    // moment inequalities
    let expanded: Vec<Vec<LinearMomentExpr>> = spec
        .constraints
        .iter()
        .zip(&cfg.powers)
        .map(|(b, &r)| (1..=r).map(|q| expand_constraint_moment(b, q)).collect())
        .collect::<Result<_>>()?;
    for t in 0..=n {
        for list in &expanded {
            for e in list {
                p.inequalities.push(layout.expr(t, e, "constraint moment")?);
            }
        }
    }

    // moment matrices
    let basis = moment_basis(cfg.dx, cfg.du);
    for t in 0..=n {
        let mut entries = Vec::with_capacity(basis.len() * (basis.len() + 1) / 2);
        for (a, &ka) in basis.iter().enumerate() {
            for &kb in &basis[a..] {
                let key = ka.times(kb);
                entries.push(if key.is_constant() {
                    AffineExpr::constant(1.0)
                } else {
                    AffineExpr::var(layout.index(t, key).expect("moment matrix key in layout"))
                });
            }
        }
        p.psd_blocks.push(PsdBlock {
            time: t,
            size: basis.len(),
            entries,
        });
    }
    Ok(p)
}

/// Solved moment trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSolution {
    pub times: Vec<f64>,
    /// Non-constant moments, in column order of `values`.
    pub keys: Vec<MomentKey>,
    /// `values[t][i]` is the moment `keys[i]` at `times[t]`.
    pub values: Vec<Vec<f64>>,
    /// Optimal value in the problem's own sense (not negated).
    pub objective_value: f64,
    pub status: SolverStatus,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl MomentSolution {
    /// Moment value at grid index `t`; the constant moment is always 1.
    pub fn value(&self, t: usize, key: MomentKey) -> Option<f64> {
        if key.is_constant() {
            return Some(1.0);
        }
        let i = self.keys.iter().position(|&k| k == key)?;
        self.values.get(t).map(|row| row[i])
    }

    pub fn num_times(&self) -> usize {
        self.times.len()
    }

    /// The numeric `(1+dx+du)` moment matrix at grid index `t`.
    pub fn moment_matrix(&self, t: usize, dx: u32, du: u32) -> Option<nalgebra::DMatrix<f64>> {
        let basis = moment_basis(dx, du);
        let s = basis.len();
        let mut m = nalgebra::DMatrix::zeros(s, s);
        for a in 0..s {
            for b in a..s {
                let v = self.value(t, basis[a].times(basis[b]))?;
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
        Some(m)
    }

    /// Evaluates a linear moment expression at grid index `t`.
    pub fn eval(&self, t: usize, e: &LinearMomentExpr) -> Option<f64> {
        let mut acc = e.constant();
        for (k, c) in e.terms() {
            acc += c * self.value(t, k)?;
        }
        Some(acc)
    }
}

/// Solves the relaxation with the embedded solver; non-optimal termination
/// is an error carrying the residuals.
pub fn solve_relaxation(
    spec: &ProblemSpec,
    cfg: &RelaxationConfig,
    opts: &SolverOptions,
) -> Result<MomentSolution> {
    solve_relaxation_with(&conic::EmbeddedSolver, spec, cfg, opts)
}

pub fn solve_relaxation_with(
    backend: &dyn ConicBackend,
    spec: &ProblemSpec,
    cfg: &RelaxationConfig,
    opts: &SolverOptions,
) -> Result<MomentSolution> {
    let sol = solve_relaxation_unchecked(backend, spec, cfg, opts)?;
    if sol.status != SolverStatus::Optimal {
        return Err(Error::Solver {
            status: sol.status,
            residuals: sol.residuals,
        });
    }
    Ok(sol)
}

/// Like [`solve_relaxation_with`] but returns whatever the solver produced.
pub fn solve_relaxation_unchecked(
    backend: &dyn ConicBackend,
    spec: &ProblemSpec,
    cfg: &RelaxationConfig,
    opts: &SolverOptions,
) -> Result<MomentSolution> {
    let program = assemble(spec, cfg)?;
    let (sf, map) = conic::to_standard_form(&program)?;
    let raw = backend.solve(&sf, opts)?;
    let flat = map.to_program(&raw.x);
    let layout = VariableLayout::new(cfg.dx, cfg.du);
    let nk = layout.keys().len();
    let values: Vec<Vec<f64>> = flat.chunks(nk).map(<[f64]>::to_vec).collect();
    let mut sol = MomentSolution {
        times: cfg.grid(spec),
        keys: layout.keys().to_vec(),
        values,
        objective_value: 0.0,
        status: raw.status,
        residuals: raw.residuals,
        iterations: raw.iterations,
    };
    sol.objective_value = cost_to_go(&sol, spec, cfg)
        .first()
        .map(|&(_, v)| v)
        .ok_or_else(|| Error::Numerical("empty moment solution".into()))?;
    Ok(sol)
}

/// Expected remaining cost from every grid point, using the same quadrature
/// as the objective. The first entry equals the objective value.
pub fn cost_to_go(sol: &MomentSolution, spec: &ProblemSpec, cfg: &RelaxationConfig) -> Vec<(f64, f64)> {
    let n = sol.num_times() - 1;
    let dt = spec.horizon / n as f64;
    let cost = LinearMomentExpr::from_polynomial(&spec.running_cost);
    let term = LinearMomentExpr::from_polynomial(&spec.terminal_cost);
    let c: Vec<f64> = (0..=n).map(|t| sol.eval(t, &cost).unwrap_or(f64::NAN)).collect();
    let h = sol.eval(n, &term).unwrap_or(f64::NAN);
    (0..=n)
        .map(|start| {
            let mut acc = 0.0;
            for m in start..n {
                acc += match cfg.scheme {
                    Scheme::Euler => dt * c[m],
                    Scheme::Trapezoid => 0.5 * dt * (c[m] + c[m + 1]),
                };
            }
            (sol.times[start], acc + h)
        })
        .collect()
}

/// The moment dynamics used by a configuration.
pub fn moment_system(spec: &ProblemSpec, cfg: &RelaxationConfig) -> MomentSystem {
    build_system(cfg.order, &spec.drift, &spec.diffusion)
}
