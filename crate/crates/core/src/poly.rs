//! Sparse bivariate polynomials in the state `x` and the control `u`.
//!
//! A [`Polynomial`] is a finite map from exponent pairs `(i, j)` to real
//! coefficients, meaning `sum c_ij x^i u^j`. Absent keys are zero and no
//! stored coefficient is exactly zero, so structural equality is
//! mathematical equality.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum total exponent (in either variable) a product may reach.
pub const DEFAULT_DEGREE_CAP: u32 = 32;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    terms: BTreeMap<(u32, u32), f64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::monomial(0, 0, c)
    }

    /// The polynomial `x`.
    pub fn x() -> Self {
        Self::monomial(1, 0, 1.0)
    }

    /// The polynomial `u`.
    pub fn u() -> Self {
        Self::monomial(0, 1, 1.0)
    }

    pub fn monomial(i: u32, j: u32, coeff: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(i, j, coeff);
        p
    }

    /// Builds a polynomial from `(i, j, coeff)` triplets; repeated exponent
    /// pairs are summed.
    pub fn from_terms<I>(terms: I) -> Self
    where
        I: IntoIterator<Item = (u32, u32, f64)>,
    {
        let mut p = Self::zero();
        for (i, j, c) in terms {
            p.add_term(i, j, c);
        }
        p
    }

    /// Adds `coeff * x^i u^j` in place, keeping the canonical form.
    pub fn add_term(&mut self, i: u32, j: u32, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        let entry = self.terms.entry((i, j)).or_insert(0.0);
        *entry += coeff;
        if *entry == 0.0 {
            self.terms.remove(&(i, j));
        }
    }

    /// Iterates `((i, j), coeff)` in ascending exponent order.
    pub fn terms(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.terms.iter().map(|(&k, &c)| (k, c))
    }

    pub fn coeff(&self, i: u32, j: u32) -> f64 {
        self.terms.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree_x(&self) -> u32 {
        self.terms.keys().map(|&(i, _)| i).max().unwrap_or(0)
    }

    pub fn degree_u(&self) -> u32 {
        self.terms.keys().map(|&(_, j)| j).max().unwrap_or(0)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_terms(self.terms().map(|((i, j), c)| (i, j, c * factor)))
    }

    /// Product, failing when either degree would exceed `cap`.
    pub fn checked_mul(&self, other: &Self, cap: u32) -> Result<Self> {
        let degree_x = self.degree_x() + other.degree_x();
        let degree_u = self.degree_u() + other.degree_u();
        let degree = degree_x.max(degree_u);
        if !self.is_zero() && !other.is_zero() && degree > cap {
            return Err(Error::DegreeCap { degree, cap });
        }
        let mut out = Self::zero();
        for (&(i, j), &a) in &self.terms {
            for (&(k, l), &b) in &other.terms {
                out.add_term(i + k, j + l, a * b);
            }
        }
        Ok(out)
    }

    /// Product under [`DEFAULT_DEGREE_CAP`]. Panics when the cap is exceeded;
    /// use [`Polynomial::checked_mul`] to handle that case.
    pub fn mul(&self, other: &Self) -> Self {
        self.checked_mul(other, DEFAULT_DEGREE_CAP)
            .unwrap_or_else(|e| panic!("{e}"))
    }

    /// `self^r` by repeated multiplication; `pow(0)` is the constant 1.
    pub fn checked_pow(&self, r: u32, cap: u32) -> Result<Self> {
        let mut out = Self::one();
        for _ in 0..r {
            out = out.checked_mul(self, cap)?;
        }
        Ok(out)
    }

    pub fn pow(&self, r: u32) -> Self {
        self.checked_pow(r, DEFAULT_DEGREE_CAP)
            .unwrap_or_else(|e| panic!("{e}"))
    }

    /// Formal partial derivative in `x`.
    pub fn d_dx(&self) -> Self {
        Self::from_terms(
            self.terms()
                .filter(|&((i, _), _)| i > 0)
                .map(|((i, j), c)| (i - 1, j, c * f64::from(i))),
        )
    }

    /// Formal second partial derivative in `x`.
    pub fn d2_dx2(&self) -> Self {
        self.d_dx().d_dx()
    }

    /// Horner evaluation in `x` for each power of `u`, then Horner in `u`.
    pub fn eval(&self, x: f64, u: f64) -> f64 {
        let du = self.degree_u();
        let mut acc = 0.0;
        for j in (0..=du).rev() {
            let mut inner = 0.0;
            let dx = self
                .terms
                .keys()
                .filter(|&&(_, jj)| jj == j)
                .map(|&(i, _)| i)
                .max();
            if let Some(dx) = dx {
                for i in (0..=dx).rev() {
                    inner = inner * x + self.coeff(i, j);
                }
            }
            acc = acc * u + inner;
        }
        acc
    }

    /// Dense coefficient table for repeated evaluation.
    pub fn to_dense(&self) -> DensePolynomial {
        DensePolynomial::new(self)
    }

    /// Substitutes `x -> sx * x`, `u -> su * u`.
    pub fn rescale_vars(&self, sx: f64, su: f64) -> Self {
        Self::from_terms(
            self.terms()
                .map(|((i, j), c)| (i, j, c * sx.powi(i as i32) * su.powi(j as i32))),
        )
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (n, ((i, j), c)) in self.terms().enumerate() {
            let mono = monomial_label(i, j);
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            if n == 0 {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if mono.is_empty() {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{mono}")?;
            } else {
                write!(f, "{mag}*{mono}")?;
            }
        }
        Ok(())
    }
}

/// `x^i u^j` rendered as `x^2u`, `xu`, `u^3`; empty for the constant.
pub(crate) fn monomial_label(i: u32, j: u32) -> String {
    let mut s = String::new();
    match i {
        0 => {}
        1 => s.push('x'),
        _ => s.push_str(&format!("x^{i}")),
    }
    match j {
        0 => {}
        1 => s.push('u'),
        _ => s.push_str(&format!("u^{j}")),
    }
    s
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for ((i, j), c) in rhs.terms() {
            out.add_term(i, j, c);
        }
        out
    }
}

impl Add for Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: Polynomial) -> Polynomial {
        &self + &rhs
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for ((i, j), c) in rhs.terms() {
            out.add_term(i, j, -c);
        }
        out
    }
}

impl Sub for Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: Polynomial) -> Polynomial {
        &self - &rhs
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        -&self
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        Polynomial::mul(self, rhs)
    }
}

impl Mul for Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: Polynomial) -> Polynomial {
        Polynomial::mul(&self, &rhs)
    }
}

/// Row-per-`u`-power coefficient table; evaluation is allocation free.
#[derive(Clone, Debug)]
pub struct DensePolynomial {
    // rows[j][i] = coefficient of x^i u^j
    rows: Vec<Vec<f64>>,
}

impl DensePolynomial {
    fn new(p: &Polynomial) -> Self {
        let mut rows = vec![Vec::new(); p.degree_u() as usize + 1];
        for ((i, j), c) in p.terms() {
            let row = &mut rows[j as usize];
            if row.len() <= i as usize {
                row.resize(i as usize + 1, 0.0);
            }
            row[i as usize] = c;
        }
        Self { rows }
    }

    #[inline]
    pub fn eval(&self, x: f64, u: f64) -> f64 {
        let mut acc = 0.0;
        for row in self.rows.iter().rev() {
            let inner = row.iter().rev().fold(0.0, |a, &c| a * x + c);
            acc = acc * u + inner;
        }
        acc
    }
}
