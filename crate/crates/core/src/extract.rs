//! Polynomial feedback extraction.
//!
//! For a policy `u = p_0(t) + p_1(t) x + ... + p_n(t) x^n`, multiplying by
//! `x^k` and taking expectations gives
//!
//! ```text
//! mu[x^k u] = p_0 mu[x^k] + p_1 mu[x^{k+1}] + ... + p_n mu[x^{k+n}]
//! ```
//!
//! Stacking `k = 0..=m` at each grid point gives a small least-squares problem
//! for the coefficients, solved here by a column-scaled, rank-revealing SVD.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MomentKey;
use crate::relaxation::MomentSolution;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Coefficients of the last grid point at or before `t`.
    Hold,
    /// Linear interpolation between the bracketing grid points.
    #[default]
    Linear,
}

/// Time-varying polynomial state feedback.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialController {
    pub order: usize,
    pub grid: Vec<f64>,
    /// `coeffs[t]` holds `p_0 .. p_order` at `grid[t]`.
    pub coeffs: Vec<Vec<f64>>,
    pub interpolation: Interpolation,
}

/// Relative singular-value cutoff of the least-squares solve.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// The `(m+1) x (n_p+1)` system at grid index `t`: rows `k`, columns `i`,
/// entries `mu[x^{k+i}]`, right-hand side `mu[x^k u]`.
pub fn extraction_system(
    sol: &MomentSolution,
    t: usize,
    order: usize,
    rows: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let get = |key: MomentKey| {
        sol.value(t, key)
            .ok_or(Error::MissingMoment { key, time: t })
    };
    let mut a = DMatrix::zeros(rows + 1, order + 1);
    let mut b = DVector::zeros(rows + 1);
    for k in 0..=rows {
        for i in 0..=order {
            a[(k, i)] = get(MomentKey::state((k + i) as u32))?;
        }
        b[k] = get(MomentKey::new(k as u32, 1))?;
    }
    Ok((a, b))
}

/// Relative column norm below which a column is treated as absent.
const COLUMN_FLOOR: f64 = 1e-10;

/// Minimum-norm least-squares solution with column equilibration.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    // columns negligible against the largest one are left unscaled so the
    // rank cut removes them (e.g. a deterministic initial state gives an
    // all-but-zero variance column)
    let raw: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let floor = COLUMN_FLOOR * raw.iter().fold(0.0f64, |m, &n| m.max(n));
    let norms: Vec<f64> = raw
        .iter()
        .map(|&n| if n > floor && n > 0.0 { n } else { 1.0 })
        .collect();
    let mut scaled = a.clone();
    for (j, n) in norms.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*n);
    }
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Ok(DVector::zeros(a.ncols()));
    }
    let y = svd
        .solve(b, RANK_TOLERANCE * smax)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?;
    Ok(DVector::from_iterator(
        y.len(),
        y.iter().zip(&norms).map(|(v, n)| v / n),
    ))
}

/// Fits an order-`order` controller using moment rows `k = 0..=rows`.
pub fn extract_controller(sol: &MomentSolution, order: usize, rows: usize) -> Result<PolynomialController> {
    let mut coeffs = Vec::with_capacity(sol.num_times());
    for t in 0..sol.num_times() {
        let (a, b) = extraction_system(sol, t, order, rows)?;
        let p = least_squares(&a, &b)?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite controller coefficient at grid index {t}")));
        }
        coeffs.push(p.iter().copied().collect());
    }
    Ok(PolynomialController {
        order,
        grid: sol.times.clone(),
        coeffs,
        interpolation: Interpolation::default(),
    })
}

/// Residual norm of the extraction system at `t` for the given coefficients.
pub fn extraction_residual(a: &DMatrix<f64>, b: &DVector<f64>, p: &[f64]) -> f64 {
    (a * DVector::from_column_slice(p) - b).norm()
}

impl PolynomialController {
    pub fn constant(grid: Vec<f64>, coeffs: Vec<f64>) -> Self {
        let order = coeffs.len().saturating_sub(1);
        Self {
            order,
            coeffs: vec![coeffs; grid.len()],
            grid,
            interpolation: Interpolation::default(),
        }
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.coeffs.len() != self.grid.len() {
            return Err(Error::Validation("controller grid and coefficient rows disagree".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("controller grid must be increasing".into()));
        }
        if self
            .coeffs
            .iter()
            .any(|c| c.len() != self.order + 1 || c.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Validation("controller coefficients must be finite with n_p+1 per row".into()));
        }
        Ok(())
    }

    /// Writes the coefficients at time `t` into `out` (length `order + 1`).
    /// Times outside the grid use the end points.
    pub fn coeffs_at(&self, t: f64, out: &mut [f64]) {
        let g = &self.grid;
        let last = g.len() - 1;
        // index of the last grid point <= t
        let i = g.partition_point(|&s| s <= t).saturating_sub(1).min(last);
        if self.interpolation == Interpolation::Hold || i == last || t <= g[0] {
            out.copy_from_slice(&self.coeffs[i]);
            return;
        }
        let w = (t - g[i]) / (g[i + 1] - g[i]);
        for ((o, a), b) in out.iter_mut().zip(&self.coeffs[i]).zip(&self.coeffs[i + 1]) {
            *o = if w == 0.0 { *a } else { (1.0 - w) * a + w * b };
        }
    }

    /// `u(t, x)`.
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let mut c = vec![0.0; self.order + 1];
        self.coeffs_at(t, &mut c);
        horner(&c, x)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        self.write(&mut w)?;
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .map_err(|e| Error::Numerical(e.to_string()))
    }

    fn write<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((0..=self.order).map(|i| format!("p{i}")));
        w.write_record(&header)?;
        for (t, c) in self.grid.iter().zip(&self.coeffs) {
            let mut row = vec![t.to_string()];
            row.extend(c.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        let ok = header.get(0) == Some("t")
            && header
                .iter()
                .skip(1)
                .enumerate()
                .all(|(i, h)| h == format!("p{i}"));
        if !ok || header.len() < 2 {
            return Err(Error::Parse("controller CSV header must be t,p0,...,pn".into()));
        }
        let order = header.len() - 2;
        let mut grid = Vec::new();
        let mut coeffs = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("controller CSV row {}: {e}", line + 2)))?;
            grid.push(vals[0]);
            coeffs.push(vals[1..].to_vec());
        }
        let c = Self {
            order,
            grid,
            coeffs,
            interpolation: Interpolation::default(),
        };
        c.validate().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(c)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }
}

/// `c_0 + c_1 x + ... + c_n x^n`.
pub fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{Residuals, SolverStatus};

    /// Exact moments of `x ~ N(m, v)` under `u = p0 + p1 x`.
    fn gaussian_solution(m: f64, v: f64, p: [f64; 2], steps: usize) -> MomentSolution {
        let raw = |k: u32| -> f64 {
            // E[x^k] for a Gaussian by the recursion E[x^k] = m E[x^{k-1}] + (k-1) v E[x^{k-2}]
            let mut e = vec![1.0, m];
            for j in 2..=k as usize {
                e.push(m * e[j - 1] + (j as f64 - 1.0) * v * e[j - 2]);
            }
            e[k as usize]
        };
        let keys: Vec<MomentKey> = (1..=6)
            .map(MomentKey::state)
            .chain((0..=3).map(|k| MomentKey::new(k, 1)))
            .collect();
        let row: Vec<f64> = keys
            .iter()
            .map(|k| if k.u == 0 { raw(k.x) } else { p[0] * raw(k.x) + p[1] * raw(k.x + 1) })
            .collect();
        MomentSolution {
            times: (0..=steps).map(|i| i as f64 / steps as f64).collect(),
            keys,
            values: vec![row; steps + 1],
            objective_value: 0.0,
            status: SolverStatus::Optimal,
            residuals: Residuals::default(),
            iterations: 0,
        }
    }

    #[test]
    fn exact_gaussian_recovery() {
        let sol = gaussian_solution(0.3, 0.7, [0.5, -1.0], 4);
        let c = extract_controller(&sol, 1, 1).unwrap();
        for row in &c.coeffs {
            assert!((row[0] - 0.5).abs() < 1e-12 && (row[1] + 1.0).abs() < 1e-12);
        }
        // over-parameterized fit still finds the true (zero-padded) policy
        let c = extract_controller(&sol, 2, 3).unwrap();
        assert!((c.coeffs[0][0] - 0.5).abs() < 1e-9);
        assert!(c.coeffs[0][2].abs() < 1e-9);
    }

    #[test]
    fn missing_moment_is_reported() {
        let sol = gaussian_solution(0.0, 1.0, [0.0, 1.0], 2);
        let err = extract_controller(&sol, 3, 4).unwrap_err();
        assert!(matches!(err, Error::MissingMoment { .. }));
    }

    #[test]
    fn eval_examples() {
        let c = PolynomialController::constant(vec![0.0, 0.5, 1.0], vec![1.0, 0.0, 0.0]);
        assert_eq!(c.eval(0.3, 17.0), 1.0);
        let c = PolynomialController {
            order: 1,
            grid: vec![0.0, 1.0],
            coeffs: vec![vec![0.0, 2.0], vec![1.0, 4.0]],
            interpolation: Interpolation::Linear,
        };
        assert_eq!(c.eval(0.0, 1.0), 2.0);
        assert_eq!(c.eval(1.0, 1.0), 5.0);
        assert_eq!(c.eval(0.5, 1.0), 0.5 + 3.0);
        let h = c.clone().with_interpolation(Interpolation::Hold);
        assert_eq!(h.eval(0.999, 1.0), 2.0);
    }

    #[test]
    fn csv_round_trip() {
        let c = PolynomialController {
            order: 2,
            grid: vec![0.0, 0.1, 0.2],
            coeffs: vec![vec![0.1, -2.5, 1e-17], vec![0.3, 1.0 / 3.0, 2.0], vec![0.0, 0.0, 0.0]],
            interpolation: Interpolation::Linear,
        };
        let text = c.to_csv_string().unwrap();
        assert!(text.starts_with("t,p0,p1,p2\n"));
        assert_eq!(PolynomialController::from_csv_str(&text).unwrap(), c);
        assert!(PolynomialController::from_csv_str("x,p0\n0,1\n").is_err());
    }
}
