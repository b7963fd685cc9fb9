//! Euler–Maruyama Monte Carlo evaluation of a feedback policy.
//!
//! Each trial draws its normals from a ChaCha stream keyed by `(seed, trial)`,
//! so results do not depend on how trials are spread over threads. Trials are
//! processed in fixed-size chunks whose partial sums are merged in trial
//! order, which keeps every statistic bit-reproducible.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{horner, PolynomialController};
use crate::moments::MomentKey;
use crate::poly::DensePolynomial;
use crate::relaxation::ProblemSpec;

/// States beyond this magnitude count as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e8;
/// Largest tolerated fraction of diverged trials.
pub const MAX_DIVERGED_FRACTION: f64 = 0.01;
const CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub trials: usize,
    pub dt_sim: f64,
    pub seed: u64,
    /// Clamp controls into the half-lines implied by linear control-only
    /// constraints.
    pub clip_controls: bool,
    /// Record `<x^i>` and `<x^i u>` for `i` up to this power (and `<u^2>`).
    pub record_moments_up_to: u32,
    /// Recording grid size when no controller grid is available.
    pub record_steps: usize,
    /// Number of leading trials whose paths are kept.
    pub paths: usize,
    pub keep_trial_costs: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            trials: 2000,
            dt_sim: 1e-3,
            seed: 0x5eed,
            clip_controls: false,
            record_moments_up_to: 4,
            record_steps: 100,
            paths: 0,
            keep_trial_costs: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Validation("at least one trial is required".into()));
        }
        if !(self.dt_sim > 0.0 && self.dt_sim <= spec.horizon) {
            return Err(Error::Validation(format!(
                "dt_sim must lie in (0, horizon], got {}",
                self.dt_sim
            )));
        }
        Ok(())
    }
}

/// One recorded point of a simulated path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub trial: usize,
    pub t: f64,
    pub x: f64,
    pub u: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub mean_cost: f64,
    /// Sample standard deviation over `sqrt(completed trials)`.
    pub std_error: f64,
    pub trials: usize,
    pub diverged: usize,
    pub first_diverged: Option<usize>,
    pub times: Vec<f64>,
    pub keys: Vec<MomentKey>,
    /// `moments[t][i]`: empirical mean of `keys[i]` at `times[t]`.
    pub moments: Vec<Vec<f64>>,
    /// Standard errors matching `moments`.
    pub moment_std_errors: Vec<Vec<f64>>,
    /// Per constraint, the fraction of completed trials that violated it at
    /// some step.
    pub violation_rates: Vec<f64>,
    pub trial_costs: Option<Vec<f64>>,
    pub paths: Vec<PathPoint>,
}

impl SimReport {
    pub fn completed(&self) -> usize {
        self.trials - self.diverged
    }

    /// Empirical moment at recording index `t`; the constant moment is 1.
    pub fn moment(&self, t: usize, key: MomentKey) -> Option<f64> {
        if key.is_constant() {
            return Some(1.0);
        }
        let i = self.keys.iter().position(|&k| k == key)?;
        self.moments.get(t).map(|r| r[i])
    }

    pub fn moment_std_error(&self, t: usize, key: MomentKey) -> Option<f64> {
        if key.is_constant() {
            return Some(0.0);
        }
        let i = self.keys.iter().position(|&k| k == key)?;
        self.moment_std_errors.get(t).map(|r| r[i])
    }
}

/// Bounds on `u` implied by constraints of the form `c0 + c1 u >= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlBounds {
    pub lower: f64,
    pub upper: f64,
}

impl ControlBounds {
    pub fn from_spec(spec: &ProblemSpec) -> Self {
        let mut lower = f64::NEG_INFINITY;
        let mut upper = f64::INFINITY;
        for b in &spec.constraints {
            if b.degree_x() != 0 || b.degree_u() != 1 {
                continue;
            }
            let (c0, c1) = (b.coeff(0, 0), b.coeff(0, 1));
            if c1 > 0.0 {
                lower = lower.max(-c0 / c1);
            } else if c1 < 0.0 {
                upper = upper.min(-c0 / c1);
            }
        }
        Self { lower, upper }
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.max(self.lower).min(self.upper)
    }
}

/// Clamps `u_raw` into the set allowed by the linear control-only
/// constraints of `spec`; other constraints are ignored.
pub fn project_control(u_raw: f64, spec: &ProblemSpec) -> f64 {
    ControlBounds::from_spec(spec).clamp(u_raw)
}

struct Model {
    f: DensePolynomial,
    g: DensePolynomial,
    c: DensePolynomial,
    h: DensePolynomial,
    b: Vec<DensePolynomial>,
    bounds: Option<ControlBounds>,
}

#[derive(Clone)]
struct Partial {
    costs: Vec<(usize, Option<f64>)>,
    sums: Vec<f64>,
    squares: Vec<f64>,
    violations: Vec<usize>,
    paths: Vec<PathPoint>,
}

/// Simulates `spec` under `ctrl` (`None` means `u = 0`).
pub fn simulate(spec: &ProblemSpec, ctrl: Option<&PolynomialController>, cfg: &SimConfig) -> Result<SimReport> {
    spec.validate()?;
    cfg.validate(spec)?;
    if let Some(c) = ctrl {
        c.validate()?;
    }
    let steps = (spec.horizon / cfg.dt_sim).round().max(1.0) as usize;
    let dt = spec.horizon / steps as f64;
    let sqdt = dt.sqrt();

    let times: Vec<f64> = match ctrl {
        Some(c) => c.grid.clone(),
        None => {
            let n = cfg.record_steps.max(1);
            (0..=n).map(|i| spec.horizon * i as f64 / n as f64).collect()
        }
    };
    // recording step for every recording time
    let record_at: Vec<usize> = times
        .iter()
        .map(|&t| ((t / dt).round().max(0.0) as usize).min(steps))
        .collect();
    let mut record_slot = vec![Vec::new(); steps + 1];
    for (slot, &step) in record_at.iter().enumerate() {
        record_slot[step].push(slot);
    }
    let r = cfg.record_moments_up_to;
    let keys: Vec<MomentKey> = (1..=r)
        .map(MomentKey::state)
        .chain((0..=r).map(|i| MomentKey::new(i, 1)))
        .chain(std::iter::once(MomentKey::new(0, 2)))
        .collect();
    let nk = keys.len();
    let width = times.len() * nk;

    let model = Model {
        f: spec.drift.to_dense(),
        g: spec.diffusion.to_dense(),
        c: spec.running_cost.to_dense(),
        h: spec.terminal_cost.to_dense(),
        b: spec.constraints.iter().map(|b| b.to_dense()).collect(),
        bounds: cfg.clip_controls.then(|| ControlBounds::from_spec(spec)),
    };
    let nb = model.b.len();

    let run_chunk = |start: usize| -> Partial {
        let end = (start + CHUNK).min(cfg.trials);
        let mut part = Partial {
            costs: Vec::with_capacity(end - start),
            sums: vec![0.0; width],
            squares: vec![0.0; width],
            violations: vec![0; nb],
            paths: Vec::new(),
        };
        let mut coeffs = vec![0.0; ctrl.map_or(1, |c| c.order + 1)];
        let mut local = vec![0.0; width];
        for trial in start..end {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(trial as u64);
            let mut x = spec.x0;
            let mut cost = 0.0;
            let mut violated = vec![false; nb];
            let mut ok = true;
            let keep_path = trial < cfg.paths;
            let mut path = Vec::new();
            for n in 0..=steps {
                let t = n as f64 * dt;
                let mut u = match ctrl {
                    Some(c) => {
                        c.coeffs_at(t, &mut coeffs);
                        horner(&coeffs, x)
                    }
                    None => 0.0,
                };
                if let Some(bd) = &model.bounds {
                    u = bd.clamp(u);
                }
                for (v, b) in violated.iter_mut().zip(&model.b) {
                    *v |= b.eval(x, u) < 0.0;
                }
                for &slot in &record_slot[n] {
                    let base = slot * nk;
                    let mut xp = 1.0;
                    for i in 0..=r as usize {
                        if i > 0 {
                            local[base + i - 1] = xp;
                        }
                        local[base + r as usize + i] = xp * u;
                        xp *= x;
                    }
                    local[base + nk - 1] = u * u;
                    if keep_path {
                        path.push(PathPoint { trial, t: times[slot], x, u });
                    }
                }
                if n == steps {
                    cost += model.h.eval(x, 0.0);
                    break;
                }
                cost += model.c.eval(x, u) * dt;
                let z: f64 = StandardNormal.sample(&mut rng);
                x += model.f.eval(x, u) * dt + model.g.eval(x, u) * sqdt * z;
                if !(x.abs() <= DIVERGENCE_BOUND) {
                    ok = false;
                    break;
                }
            }
            if ok && cost.is_finite() {
                part.costs.push((trial, Some(cost)));
                for ((s, q), v) in part.sums.iter_mut().zip(part.squares.iter_mut()).zip(&local) {
                    *s += v;
                    *q += v * v;
                }
                for (c, v) in part.violations.iter_mut().zip(&violated) {
                    *c += usize::from(*v);
                }
                part.paths.extend(path);
            } else {
                part.costs.push((trial, None));
            }
        }
        part
    };

    let starts: Vec<usize> = (0..cfg.trials).step_by(CHUNK).collect();
    let parts: Vec<Partial> = starts.par_iter().map(|&s| run_chunk(s)).collect();

    // ordered merge
    let mut costs = Vec::with_capacity(cfg.trials);
    let mut sums = vec![0.0; width];
    let mut squares = vec![0.0; width];
    let mut violations = vec![0usize; nb];
    let mut paths = Vec::new();
    let mut diverged = 0;
    let mut first_diverged = None;
    for part in parts {
        for (trial, c) in part.costs {
            match c {
                Some(c) => costs.push(c),
                None => {
                    diverged += 1;
                    first_diverged.get_or_insert(trial);
                }
            }
        }
        sums.iter_mut().zip(&part.sums).for_each(|(a, b)| *a += b);
        squares.iter_mut().zip(&part.squares).for_each(|(a, b)| *a += b);
        violations.iter_mut().zip(&part.violations).for_each(|(a, b)| *a += b);
        paths.extend(part.paths);
    }
    if diverged as f64 > MAX_DIVERGED_FRACTION * cfg.trials as f64 || costs.is_empty() {
        return Err(Error::Divergence {
            diverged,
            trials: cfg.trials,
            first_trial: first_diverged.unwrap_or(0),
        });
    }
    let done = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / done;
    let var = if costs.len() > 1 {
        costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (done - 1.0)
    } else {
        0.0
    };
    let means: Vec<f64> = sums.iter().map(|s| s / done).collect();
    let ses: Vec<f64> = means
        .iter()
        .zip(&squares)
        .map(|(m, q)| {
            if done > 1.0 {
                ((q / done - m * m).max(0.0) * done / (done - 1.0) / done).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Ok(SimReport {
        mean_cost: mean,
        std_error: (var / done).sqrt(),
        trials: cfg.trials,
        diverged,
        first_diverged,
        times,
        keys,
        moments: means.chunks(nk).map(<[f64]>::to_vec).collect(),
        moment_std_errors: ses.chunks(nk).map(<[f64]>::to_vec).collect(),
        violation_rates: violations.iter().map(|&v| v as f64 / done).collect(),
        trial_costs: cfg.keep_trial_costs.then_some(costs),
        paths,
    })
}

impl SimReport {
    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["mean_cost", "std_error", "trials", "completed", "diverged"])?;
        w.write_record([
            self.mean_cost.to_string(),
            self.std_error.to_string(),
            self.trials.to_string(),
            self.completed().to_string(),
            self.diverged.to_string(),
        ])?;
        finish(w)
    }

    pub fn moments_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string()];
        header.extend(self.keys.iter().map(|k| k.label()));
        w.write_record(&header)?;
        for (t, row) in self.times.iter().zip(&self.moments) {
            let mut rec = vec![t.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        finish(w)
    }

    pub fn paths_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["trial", "t", "x", "u"])?;
        for p in &self.paths {
            w.write_record([p.trial.to_string(), p.t.to_string(), p.x.to_string(), p.u.to_string()])?;
        }
        finish(w)
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.summary_csv()?)?;
        Ok(())
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
}
