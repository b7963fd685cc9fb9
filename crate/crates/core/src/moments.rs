//! Moment dynamics implied by the Itô generator.
//!
//! For `q(x) = x^k` the expected value of the generator applied to `q` is a
//! linear combination of moments `<x^i u^j>`:
//!
//! ```text
//! d/dt <x^k> = k sum f_ij <x^{i+k-1} u^j>
//!            + k(k-1)/2 sum (g^2)_ij <x^{i+k-2} u^j>
//! ```
//!
//! This module builds those right-hand sides symbolically, together with the
//! index set of the moment matrix and the automatic sizing rule that picks the
//! largest number of equations and constraint powers the matrix can support.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{monomial_label, Polynomial, DEFAULT_DEGREE_CAP};

/// Names the moment `<x^i u^j>`.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct MomentKey {
    pub x: u32,
    pub u: u32,
}

impl MomentKey {
    /// The constant moment `<1> = 1`.
    pub const ONE: MomentKey = MomentKey { x: 0, u: 0 };

    pub const fn new(x: u32, u: u32) -> Self {
        Self { x, u }
    }

    /// `<x^k>`.
    pub const fn state(k: u32) -> Self {
        Self { x: k, u: 0 }
    }

    pub fn is_constant(&self) -> bool {
        *self == Self::ONE
    }

    /// Key of the product of the two monomials.
    pub fn times(self, other: MomentKey) -> MomentKey {
        MomentKey::new(self.x + other.x, self.u + other.u)
    }

    /// Monomial label: `1`, `x`, `x^3`, `xu`, `u^2`.
    pub fn label(&self) -> String {
        if self.is_constant() {
            "1".to_string()
        } else {
            monomial_label(self.x, self.u)
        }
    }
}

impl fmt::Display for MomentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mu[{}]", self.label())
    }
}

/// Affine function `constant + sum coeff * mu[key]` of moments. The constant
/// moment is always folded into `constant`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearMomentExpr {
    terms: BTreeMap<MomentKey, f64>,
    constant: f64,
}

impl LinearMomentExpr {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces every monomial `x^a u^b` by the moment `mu[x^a u^b]`.
    pub fn from_polynomial(p: &Polynomial) -> Self {
        let mut e = Self::new();
        for ((i, j), c) in p.terms() {
            e.add_term(MomentKey::new(i, j), c);
        }
        e
    }

    pub fn add_term(&mut self, key: MomentKey, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        if key.is_constant() {
            self.constant += coeff;
            return;
        }
        let entry = self.terms.entry(key).or_insert(0.0);
        *entry += coeff;
        if *entry == 0.0 {
            self.terms.remove(&key);
        }
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (MomentKey, f64)> + '_ {
        self.terms.iter().map(|(&k, &c)| (k, c))
    }

    pub fn keys(&self) -> impl Iterator<Item = MomentKey> + '_ {
        self.terms.keys().copied()
    }

    pub fn coeff(&self, key: MomentKey) -> f64 {
        if key.is_constant() {
            self.constant
        } else {
            self.terms.get(&key).copied().unwrap_or(0.0)
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty() && self.constant == 0.0
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = Self::new();
        for (k, c) in self.terms() {
            out.add_term(k, c * factor);
        }
        out.constant = self.constant * factor;
        out
    }

    /// Evaluates with `value(key)` supplying non-constant moments.
    pub fn eval<F: Fn(MomentKey) -> f64>(&self, value: F) -> f64 {
        self.terms().fold(self.constant, |acc, (k, c)| acc + c * value(k))
    }
}

impl fmt::Display for LinearMomentExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        if self.constant != 0.0 || self.terms.is_empty() {
            write!(f, "{}", self.constant)?;
            first = false;
        }
        for (k, c) in self.terms() {
            let (sign, mag) = if c < 0.0 { ('-', -c) } else { ('+', c) };
            if first {
                if sign == '-' {
                    write!(f, "-")?;
                }
                first = false;
            } else {
                write!(f, " {sign} ")?;
            }
            if mag == 1.0 {
                write!(f, "{k}")?;
            } else {
                write!(f, "{mag}*{k}")?;
            }
        }
        Ok(())
    }
}

/// Right-hand sides of `d mu[x^k]/dt` for `k = 1..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSystem {
    rhs: Vec<LinearMomentExpr>,
    required_keys: BTreeSet<MomentKey>,
}

impl MomentSystem {
    /// Number of state-moment equations `K`.
    pub fn order(&self) -> u32 {
        self.rhs.len() as u32
    }

    /// Right-hand side for `mu[x^k]`, `1 <= k <= K`.
    pub fn rhs(&self, k: u32) -> &LinearMomentExpr {
        assert!(k >= 1 && k <= self.order(), "equation index {k} out of range");
        &self.rhs[(k - 1) as usize]
    }

    pub fn equations(&self) -> impl Iterator<Item = (u32, &LinearMomentExpr)> {
        self.rhs.iter().enumerate().map(|(i, e)| (i as u32 + 1, e))
    }

    /// Every moment that appears on some right-hand side.
    pub fn required_keys(&self) -> &BTreeSet<MomentKey> {
        &self.required_keys
    }

    /// True when no right-hand side references a state power above `K`.
    /// Mixed and control moments are decision variables, so they never
    /// break closure.
    pub fn is_closed(&self) -> bool {
        let k = self.order();
        self.required_keys.iter().all(|key| key.x <= k)
    }

    /// One line per equation: `dmu[x^k]/dt = ...`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (k, e) in self.equations() {
            out.push_str(&format!("d{}/dt = {}\n", MomentKey::state(k), e));
        }
        out
    }
}

/// Applies the generator to `x^k` and takes expectations.
///
/// `k = 0` yields the empty expression (the derivative of a constant).
pub fn generator_apply(k: u32, f: &Polynomial, g: &Polynomial) -> LinearMomentExpr {
    let mut e = LinearMomentExpr::new();
    if k == 0 {
        return e;
    }
    let kf = f64::from(k);
    for ((i, j), c) in f.terms() {
        e.add_term(MomentKey::new(i + k - 1, j), kf * c);
    }
    if k >= 2 {
        let half = kf * (kf - 1.0) / 2.0;
        for ((i, j), c) in g.mul(g).terms() {
            e.add_term(MomentKey::new(i + k - 2, j), half * c);
        }
    }
    e
}

pub fn build_system(order: u32, f: &Polynomial, g: &Polynomial) -> MomentSystem {
    let rhs: Vec<_> = (1..=order).map(|k| generator_apply(k, f, g)).collect();
    let required_keys = rhs.iter().flat_map(|e| e.keys()).collect();
    MomentSystem { rhs, required_keys }
}

/// Monomials `1, x, ..., x^dx, u, ..., u^du` indexing the moment matrix.
pub fn moment_basis(dx: u32, du: u32) -> Vec<MomentKey> {
    (0..=dx)
        .map(MomentKey::state)
        .chain((1..=du).map(|b| MomentKey::new(0, b)))
        .collect()
}

/// Distinct entries of the `(1+dx+du)^2` moment matrix.
pub fn matrix_index_set(dx: u32, du: u32) -> BTreeSet<MomentKey> {
    let basis = moment_basis(dx, du);
    let mut set = BTreeSet::new();
    for (p, &a) in basis.iter().enumerate() {
        for &b in &basis[p..] {
            set.insert(a.times(b));
        }
    }
    set
}

/// Sizes chosen for a relaxation: the number of moment equations and one
/// constraint power per inequality.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizing {
    pub order: u32,
    pub powers: Vec<u32>,
}

/// Largest `K` and `r_l` whose moments all fit in the moment matrix.
pub fn auto_size(
    dx: u32,
    du: u32,
    f: &Polynomial,
    g: &Polynomial,
    constraints: &[Polynomial],
) -> Result<Sizing> {
    if dx == 0 || du == 0 {
        return Err(Error::Sizing("d_x and d_u must be at least 1".into()));
    }
    let index = matrix_index_set(dx, du);
    let mut order = 0;
    while equation_fits(order + 1, f, g, &index) {
        order += 1;
    }
    if order == 0 {
        return Err(Error::Sizing(format!(
            "the first moment equation needs moments outside the d_x={dx}, d_u={du} moment matrix"
        )));
    }
    let mut powers = Vec::with_capacity(constraints.len());
    for (l, b) in constraints.iter().enumerate() {
        let r = max_constraint_power(b, &index)?;
        if r == 0 {
            return Err(Error::Sizing(format!(
                "constraint {l} ({b}) needs moments outside the d_x={dx}, d_u={du} moment matrix"
            )));
        }
        powers.push(r);
    }
    Ok(Sizing { order, powers })
}

/// Whether equation `k` (its own moment and its right-hand side) lies inside
/// `index`.
pub fn equation_fits(k: u32, f: &Polynomial, g: &Polynomial, index: &BTreeSet<MomentKey>) -> bool {
    index.contains(&MomentKey::state(k))
        && generator_apply(k, f, g).keys().all(|key| index.contains(&key))
}

/// Whether every moment of `<b^r>` lies inside `index`.
pub fn constraint_power_fits(b: &Polynomial, r: u32, index: &BTreeSet<MomentKey>) -> Result<bool> {
    let p = b.checked_pow(r, DEFAULT_DEGREE_CAP)?;
    let fits = p
        .terms()
        .all(|((i, j), _)| index.contains(&MomentKey::new(i, j)));
    Ok(fits)
}

fn max_constraint_power(b: &Polynomial, index: &BTreeSet<MomentKey>) -> Result<u32> {
    if b.degree_x() == 0 && b.degree_u() == 0 {
        // constant constraint: a single power already says everything
        return Ok(1);
    }
    let mut r = 0;
    let max_deg = b.degree_x().max(b.degree_u()).max(1);
    while (r + 1) * max_deg <= DEFAULT_DEGREE_CAP && constraint_power_fits(b, r + 1, index)? {
        r += 1;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic() -> (Polynomial, Polynomial) {
        (
            Polynomial::from_terms([(1, 0, 2.25), (3, 0, -1.0), (0, 1, 1.0)]),
            Polynomial::one(),
        )
    }

    fn lqr() -> (Polynomial, Polynomial) {
        (Polynomial::u(), Polynomial::one())
    }

    fn key(x: u32, u: u32) -> MomentKey {
        MomentKey::new(x, u)
    }

    #[test]
    fn first_cubic_moment() {
        let (f, g) = cubic();
        let e = generator_apply(1, &f, &g);
        let mut want = LinearMomentExpr::new();
        want.add_term(key(1, 0), 2.25);
        want.add_term(key(3, 0), -1.0);
        want.add_term(key(0, 1), 1.0);
        assert_eq!(e, want);
    }

    #[test]
    fn second_cubic_moment() {
        let (f, g) = cubic();
        let e = generator_apply(2, &f, &g);
        assert_eq!(e.constant(), 1.0);
        assert_eq!(e.coeff(key(2, 0)), 4.5);
        assert_eq!(e.coeff(key(4, 0)), -2.0);
        assert_eq!(e.coeff(key(1, 1)), 2.0);
        assert_eq!(e.len(), 3);
    }

    #[test]
    fn kth_cubic_moment() {
        let (f, g) = cubic();
        for k in 3..12u32 {
            let e = generator_apply(k, &f, &g);
            let kf = f64::from(k);
            assert_eq!(e.coeff(key(k, 0)), 2.25 * kf);
            assert_eq!(e.coeff(key(k + 2, 0)), -kf);
            assert_eq!(e.coeff(key(k - 1, 1)), kf);
            assert_eq!(e.coeff(key(k - 2, 0)), kf * (kf - 1.0) / 2.0);
            assert_eq!(e.len(), 4);
            assert_eq!(e.constant(), 0.0);
        }
    }

    #[test]
    fn lqr_system() {
        let (f, g) = lqr();
        let sys = build_system(2, &f, &g);
        assert_eq!(sys.rhs(1).coeff(key(0, 1)), 1.0);
        assert_eq!(sys.rhs(1).len(), 1);
        assert_eq!(sys.rhs(2).coeff(key(1, 1)), 2.0);
        assert_eq!(sys.rhs(2).constant(), 1.0);
        assert_eq!(sys.rhs(2).len(), 1);
        assert!(sys.is_closed());
        let keys: Vec<_> = sys.required_keys().iter().copied().collect();
        assert_eq!(keys, vec![key(0, 1), key(1, 1)]);
    }

    #[test]
    fn fisheries_third_equation_carries_sigma_squared() {
        let gamma = 0.7;
        let sigma = 0.3;
        let f = Polynomial::from_terms([(1, 0, 1.0), (2, 0, -gamma), (0, 1, -1.0)]);
        let g = Polynomial::monomial(1, 0, sigma);
        let e = generator_apply(3, &f, &g);
        assert_eq!(e.coeff(key(3, 0)), 3.0 + 3.0 * sigma * sigma);
        assert_eq!(e.coeff(key(4, 0)), -3.0 * gamma);
        assert_eq!(e.coeff(key(2, 1)), -3.0);
    }

    #[test]
    fn cubic_never_closes() {
        let (f, g) = cubic();
        for k in 1..15 {
            assert!(!build_system(k, &f, &g).is_closed());
        }
    }

    #[test]
    fn index_sets() {
        let s = matrix_index_set(1, 1);
        let want: BTreeSet<_> = [key(0, 0), key(1, 0), key(2, 0), key(1, 1), key(0, 1), key(0, 2)]
            .into_iter()
            .collect();
        assert_eq!(s, want);
        let s = matrix_index_set(2, 1);
        assert!(s.contains(&key(2, 1)) && s.contains(&key(4, 0)));
        assert_eq!(s.len(), 9);
        let s = matrix_index_set(3, 1);
        assert!(s.contains(&key(6, 0)) && s.contains(&key(3, 1)));
        assert!(!s.contains(&key(7, 0)) && !s.contains(&key(4, 1)));
    }

    #[test]
    fn index_set_cardinality_matches_enumeration() {
        for dx in 1..8 {
            for du in 1..4 {
                // rows of the Hankel-like matrix: x-block gives 2dx+1 powers,
                // the u-block 2du+1 powers sharing the constant, and the cross
                // block dx*du mixed entries
                let expect = (2 * dx + 1) + 2 * du + dx * du;
                assert_eq!(matrix_index_set(dx, du).len() as u32, expect);
            }
        }
    }

    #[test]
    fn auto_size_examples() {
        let (f, g) = cubic();
        assert_eq!(auto_size(3, 1, &f, &g, &[]).unwrap().order, 4);
        assert_eq!(auto_size(2, 1, &f, &g, &[]).unwrap().order, 2);
        assert_eq!(auto_size(9, 1, &f, &g, &[]).unwrap().order, 10);
        let (f, g) = lqr();
        assert_eq!(auto_size(1, 1, &f, &g, &[]).unwrap().order, 2);
        let fish_f = Polynomial::from_terms([(1, 0, 1.0), (2, 0, -1.0), (0, 1, -1.0)]);
        let fish_g = Polynomial::monomial(1, 0, 0.1);
        let s = auto_size(2, 1, &fish_f, &fish_g, &[Polynomial::x(), Polynomial::u()]).unwrap();
        assert_eq!(s.powers, vec![4, 2]);
        assert_eq!(s.order, 3);
    }

    #[test]
    fn auto_size_rejects_too_small_matrix() {
        // x^5 drift needs mu[x^5] for the first equation
        let f = Polynomial::monomial(5, 0, -1.0);
        assert!(matches!(
            auto_size(2, 1, &f, &Polynomial::one(), &[]),
            Err(Error::Sizing(_))
        ));
        let b = Polynomial::monomial(0, 3, 1.0);
        assert!(matches!(
            auto_size(2, 1, &Polynomial::u(), &Polynomial::one(), &[b]),
            Err(Error::Sizing(_))
        ));
    }

    #[test]
    fn dump_format() {
        let (f, g) = lqr();
        let text = build_system(2, &f, &g).dump();
        assert_eq!(text, "dmu[x]/dt = mu[u]\ndmu[x^2]/dt = 1 + 2*mu[xu]\n");
    }
}
