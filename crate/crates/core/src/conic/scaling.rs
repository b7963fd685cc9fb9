//! Ruiz equilibration of the constraint matrix.
//!
//! The scaled problem has `A~ = E A D`, `b~ = E b`, `c~ = k D c`. Rows of a
//! PSD cone share a single factor so the cone is mapped onto itself.

use super::StandardConicForm;

const MIN_SCALE: f64 = 1e-4;
const MAX_SCALE: f64 = 1e4;

pub(crate) struct Equilibration {
    d: Vec<f64>,
    e: Vec<f64>,
    k: f64,
}

impl Equilibration {
    pub fn identity(sf: &StandardConicForm) -> Self {
        Self {
            d: vec![1.0; sf.num_vars()],
            e: vec![1.0; sf.num_rows()],
            k: 1.0,
        }
    }

    pub fn ruiz(sf: &StandardConicForm, passes: usize) -> Self {
        let (m, n) = (sf.num_rows(), sf.num_vars());
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];
        let mut a = sf.a.clone();
        let psd_ranges: Vec<_> = sf
            .cones
            .psd
            .iter()
            .zip(sf.cones.psd_offsets())
            .map(|(&s, o)| o..o + super::psd::svec_len(s))
            .collect();
        let mut dd = vec![0.0; n];
        let mut de = vec![0.0; m];
        for _ in 0..passes {
            for (x, norm) in dd.iter_mut().zip(a.col_norms_inf()) {
                *x = factor(norm);
            }
            let mut rows = a.row_norms_inf();
            for r in &psd_ranges {
                let mx = rows[r.clone()].iter().fold(0.0f64, |a, &b| a.max(b));
                rows[r.clone()].iter_mut().for_each(|v| *v = mx);
            }
            for (x, norm) in de.iter_mut().zip(rows) {
                *x = factor(norm);
            }
            a.scale(&de, &dd);
            for (x, f) in d.iter_mut().zip(&dd) {
                *x = (*x * f).clamp(MIN_SCALE, MAX_SCALE);
            }
            for (x, f) in e.iter_mut().zip(&de) {
                *x = (*x * f).clamp(MIN_SCALE, MAX_SCALE);
            }
        }
        let cmax = sf.c.iter().zip(&d).fold(0.0f64, |m, (c, d)| m.max((c * d).abs()));
        let k = if cmax > 0.0 {
            (1.0 / cmax).clamp(MIN_SCALE, MAX_SCALE)
        } else {
            1.0
        };
        Self { d, e, k }
    }

    pub fn apply(&self, sf: &StandardConicForm) -> StandardConicForm {
        let mut a = sf.a.clone();
        a.scale(&self.e, &self.d);
        StandardConicForm {
            c: sf.c.iter().zip(&self.d).map(|(c, d)| self.k * c * d).collect(),
            c0: sf.c0,
            a,
            b: sf.b.iter().zip(&self.e).map(|(b, e)| b * e).collect(),
            cones: sf.cones.clone(),
        }
    }

    /// Maps a scaled iterate back to the original coordinates.
    pub fn unscale(&self, x: &[f64], s: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            x.iter().zip(&self.d).map(|(x, d)| x * d).collect(),
            s.iter().zip(&self.e).map(|(s, e)| s / e).collect(),
            y.iter().zip(&self.e).map(|(y, e)| y * e / self.k).collect(),
        )
    }
}

fn factor(norm: f64) -> f64 {
    if norm > 1e-12 {
        (1.0 / norm.sqrt()).clamp(MIN_SCALE, MAX_SCALE)
    } else {
        1.0
    }
}
