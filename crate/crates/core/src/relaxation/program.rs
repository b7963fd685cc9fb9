//! Solver-agnostic description of an assembled moment program.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MomentKey;

/// `constant + sum coeff * var[index]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    /// Sorted by variable index, no duplicates, no exact zeros.
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(index: usize) -> Self {
        Self {
            terms: vec![(index, 1.0)],
            constant: 0.0,
        }
    }

    /// Canonicalizes arbitrary `(index, coeff)` pairs.
    pub fn from_terms(terms: impl IntoIterator<Item = (usize, f64)>, constant: f64) -> Self {
        let mut map = BTreeMap::new();
        for (i, c) in terms {
            *map.entry(i).or_insert(0.0) += c;
        }
        Self {
            terms: map.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            constant,
        }
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(i, c)| acc + c * values[i])
    }

    pub fn max_index(&self) -> Option<usize> {
        self.terms.last().map(|&(i, _)| i)
    }
}

/// A symmetric matrix of affine entries constrained to be PSD.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdBlock {
    /// Grid index the block belongs to.
    pub time: usize,
    pub size: usize,
    /// Upper triangle, row-major: `(0,0), (0,1), ..., (1,1), ...`.
    pub entries: Vec<AffineExpr>,
}

impl PsdBlock {
    pub fn entry(&self, a: usize, b: usize) -> &AffineExpr {
        &self.entries[crate::conic::psd::svec_index(self.size, a, b)]
    }

    /// Numeric matrix at `values`.
    pub fn eval(&self, values: &[f64]) -> nalgebra::DMatrix<f64> {
        let s = self.size;
        nalgebra::DMatrix::from_fn(s, s, |a, b| self.entry(a, b).eval(values))
    }
}

/// Linear objective, affine equalities (`= 0`), affine inequalities (`>= 0`)
/// and PSD blocks over named moment variables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    /// `(grid index, moment)` per variable.
    pub variables: Vec<(usize, MomentKey)>,
    /// Positive diagonal scaling used when handing the program to a solver
    /// (`solver variable = value / scale`). Powers of two, so the round trip
    /// is exact.
    pub variable_scale: Vec<f64>,
    pub objective: AffineExpr,
    pub equalities: Vec<AffineExpr>,
    pub inequalities: Vec<AffineExpr>,
    pub psd_blocks: Vec<PsdBlock>,
}

impl ConicProgram {
    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    /// Checks that every referenced variable is declared and block sizes
    /// are consistent.
    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        if self.variable_scale.len() != n {
            return Err(Error::Validation("variable_scale length mismatch".into()));
        }
        if self.variable_scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Validation("variable scales must be positive".into()));
        }
        let exprs = std::iter::once(&self.objective)
            .chain(&self.equalities)
            .chain(&self.inequalities)
            .chain(self.psd_blocks.iter().flat_map(|b| &b.entries));
        for e in exprs {
            if e.max_index().is_some_and(|i| i >= n) {
                return Err(Error::Validation("expression references an undeclared variable".into()));
            }
        }
        for b in &self.psd_blocks {
            if b.entries.len() != b.size * (b.size + 1) / 2 {
                return Err(Error::Validation(format!(
                    "PSD block at grid index {} has {} entries for side {}",
                    b.time,
                    b.entries.len(),
                    b.size
                )));
            }
        }
        Ok(())
    }

    /// Largest violation of any equality, inequality or PSD block at `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let eq = self
            .equalities
            .iter()
            .map(|e| e.eval(values).abs())
            .fold(0.0, f64::max);
        let ineq = self
            .inequalities
            .iter()
            .map(|e| (-e.eval(values)).max(0.0))
            .fold(0.0, f64::max);
        let psd = self
            .psd_blocks
            .iter()
            .map(|b| (-crate::conic::psd::min_eigenvalue(&b.eval(values))).max(0.0))
            .fold(0.0, f64::max);
        eq.max(ineq).max(psd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_canonical() {
        let e = AffineExpr::from_terms([(3, 1.0), (1, 2.0), (3, -1.0)], 0.5);
        assert_eq!(e.terms, vec![(1, 2.0)]);
        assert_eq!(e.eval(&[0.0, 2.0, 0.0, 9.0]), 4.5);
    }
}
