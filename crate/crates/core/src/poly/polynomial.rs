use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::{Monomial, PolyError, VarId, COEFF_TOL};

/// Sparse real polynomial keyed by graded-lex ordered monomials.
#[derive(Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<(Monomial, f64)>", into = "Vec<(Monomial, f64)>")]
pub struct Polynomial {
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::term(Monomial::one(), c)
    }

    pub fn var(v: VarId) -> Self {
        Self::term(Monomial::var(v), 1.0)
    }

    pub fn term(m: Monomial, c: f64) -> Self {
        let mut p = Polynomial::zero();
        p.add_term(m, c);
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut p = Polynomial::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    /// Accumulates `c * m`, dropping the term if it cancels below the
    /// coefficient tolerance.
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                if c.abs() >= COEFF_TOL {
                    v.insert(c);
                }
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().abs() < COEFF_TOL {
                    o.remove();
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn monomials(&self) -> impl Iterator<Item = &Monomial> + '_ {
        self.terms.keys()
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn vars(&self) -> BTreeSet<VarId> {
        self.terms.keys().flat_map(|m| m.vars()).collect()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(m, c)| (m.clone(), c * s)))
    }

    pub fn add_scaled(&mut self, other: &Polynomial, s: f64) {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), c * s);
        }
    }

    pub fn mul_monomial(&self, m: &Monomial, c: f64) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(k, v)| (k.mul(m), v * c)))
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut out = Polynomial::constant(1.0);
        for _ in 0..e {
            out = &out * self;
        }
        out
    }

    /// Evaluates at `point`; every variable id must index into it.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if let Some(v) = self.max_var() {
            if v as usize >= point.len() {
                return Err(PolyError::DimensionMismatch {
                    expected: v as usize + 1,
                    got: point.len(),
                });
            }
        }
        Ok(self.eval(point))
    }

    /// Unchecked evaluation; panics if a variable id is out of range.
    pub fn eval(&self, point: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.eval(point)).sum()
    }

    pub fn max_var(&self) -> Option<VarId> {
        self.terms.keys().filter_map(Monomial::max_var).max()
    }

    /// Substitutes `subs[v]` for every variable `v`.
    pub fn compose(&self, subs: &[Polynomial]) -> Result<Polynomial, PolyError> {
        check_arity(self.max_var(), subs.len())?;
        let mut cache = PowerCache::new(subs);
        let mut out = Polynomial::zero();
        for (m, c) in &self.terms {
            let p = cache.monomial(m);
            out.add_scaled(&p, *c);
        }
        Ok(out)
    }

    /// Drops terms whose magnitude is below `tol`.
    pub fn prune(&self, tol: f64) -> Polynomial {
        Polynomial::from_terms(
            self.terms
                .iter()
                .filter(|(_, c)| c.abs() >= tol)
                .map(|(m, c)| (m.clone(), *c)),
        )
    }

    /// Largest coefficient-wise difference.
    pub fn max_abs_diff(&self, other: &Polynomial) -> f64 {
        (self - other).max_abs_coeff()
    }

    /// Renames variables through `map` (`map[v]` is the new id of `v`).
    pub fn remap(&self, map: &[VarId]) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(m, c)| {
            (
                Monomial::from_pairs(m.pairs().iter().map(|&(v, e)| (map[v as usize], e))),
                *c,
            )
        }))
    }
}

impl From<Vec<(Monomial, f64)>> for Polynomial {
    fn from(v: Vec<(Monomial, f64)>) -> Self {
        Polynomial::from_terms(v)
    }
}

impl From<Polynomial> for Vec<(Monomial, f64)> {
    fn from(p: Polynomial) -> Self {
        p.terms.into_iter().collect()
    }
}

pub(crate) fn check_arity(max_var: Option<VarId>, n: usize) -> Result<(), PolyError> {
    match max_var {
        Some(v) if v as usize >= n => Err(PolyError::ArityMismatch {
            needed: v as usize + 1,
            got: n,
        }),
        _ => Ok(()),
    }
}

/// Memoises powers of substituted polynomials during composition.
pub(crate) struct PowerCache<'a> {
    subs: &'a [Polynomial],
    powers: HashMap<(VarId, u32), Polynomial>,
}

impl<'a> PowerCache<'a> {
    pub(crate) fn new(subs: &'a [Polynomial]) -> Self {
        PowerCache {
            subs,
            powers: HashMap::new(),
        }
    }

    fn power(&mut self, v: VarId, e: u32) -> Polynomial {
        if e == 0 {
            return Polynomial::constant(1.0);
        }
        if let Some(p) = self.powers.get(&(v, e)) {
            return p.clone();
        }
        let p = if e == 1 {
            self.subs[v as usize].clone()
        } else {
            let half = self.power(v, e / 2);
            let sq = &half * &half;
            if e % 2 == 1 {
                &sq * &self.subs[v as usize]
            } else {
                sq
            }
        };
        self.powers.insert((v, e), p.clone());
        p
    }

    pub(crate) fn monomial(&mut self, m: &Monomial) -> Polynomial {
        let mut acc = Polynomial::constant(1.0);
        for &(v, e) in m.pairs() {
            let p = self.power(v, e);
            acc = &acc * &p;
        }
        acc
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        out.add_scaled(rhs, 1.0);
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        out.add_scaled(rhs, -1.0);
        out
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut acc: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                *acc.entry(ma.mul(mb)).or_insert(0.0) += ca * cb;
            }
        }
        acc.retain(|_, c| c.abs() >= COEFF_TOL);
        Polynomial { terms: acc }
    }
}

impl Mul<f64> for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: f64) -> Polynomial {
        self.scale(rhs)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $f(self, rhs: Polynomial) -> Polynomial {
                (&self).$f(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl fmt::Display for Polynomial {
    /// Writes the polynomial in the `±c*x1^a*x2^b` text syntax, highest
    /// monomial first. Coefficients use round-trip precision.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, &c)) in self.terms.iter().rev().enumerate() {
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            if k == 0 {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if m.is_one() {
                write!(f, "{mag:?}")?;
            } else if mag == 1.0 {
                write!(f, "{m}")?;
            } else {
                write!(f, "{mag:?}*{m}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Dense matrix of polynomials, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Polynomial>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        PolyMatrix {
            rows,
            cols,
            data: vec![Polynomial::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<Polynomial>>) -> Result<Self, PolyError> {
        let r = rows.len();
        let c = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|row| row.len() != c) {
            return Err(PolyError::ShapeMismatch(format!(
                "ragged matrix rows (expected {c} columns)"
            )));
        }
        Ok(PolyMatrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> &Polynomial {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Polynomial) {
        self.data[i * self.cols + j] = p;
    }

    pub fn row(&self, i: usize) -> &[Polynomial] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `self * v` for a polynomial column vector `v`.
    pub fn mul_vec(&self, v: &[Polynomial]) -> Result<Vec<Polynomial>, PolyError> {
        if v.len() != self.cols {
            return Err(PolyError::ShapeMismatch(format!(
                "matrix has {} columns, vector has {} entries",
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                let mut acc = Polynomial::zero();
                for (j, vj) in v.iter().enumerate() {
                    acc = &acc + &(self.get(i, j) * vj);
                }
                acc
            })
            .collect())
    }

    /// Numeric evaluation at a point.
    pub fn eval(&self, point: &[f64]) -> Vec<f64> {
        self.data.iter().map(|p| p.eval(point)).collect()
    }

    pub fn max_var(&self) -> Option<VarId> {
        self.data.iter().filter_map(Polynomial::max_var).max()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Polynomial {
        Polynomial::var(0)
    }

    #[test]
    fn difference_of_squares() {
        let one = Polynomial::constant(1.0);
        let p = &(&x() + &one) * &(&x() - &one);
        let expect = &x().pow(2) - &one;
        assert_eq!(p, expect);
        assert_eq!(p.degree(), 2);
    }

    #[test]
    fn cancellation_keeps_canonical_form() {
        let p = &x() - &x();
        assert!(p.is_zero());
        let mut q = Polynomial::constant(1.0);
        q.add_term(Monomial::one(), -1.0 + 1e-14);
        assert!(q.is_zero());
    }

    #[test]
    fn evaluate_safe_set() {
        // x1^2 + x2^2 - 3 at (1, 1)
        let p = &(&Polynomial::var(0).pow(2) + &Polynomial::var(1).pow(2)) - &Polynomial::constant(3.0);
        assert_eq!(p.evaluate(&[1.0, 1.0]).unwrap(), -1.0);
        assert_eq!(Polynomial::zero().evaluate(&[3.0]).unwrap(), 0.0);
        assert!(matches!(
            p.evaluate(&[1.0]),
            Err(PolyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn compose_identity_and_arity() {
        let h = Polynomial::from_terms([
            (Monomial::one(), 0.1),
            (Monomial::var_pow(0, 2), -1.0),
            (Monomial::var(0).mul(&Monomial::var(1)), 0.5),
        ]);
        let id = vec![Polynomial::var(0), Polynomial::var(1)];
        assert_eq!(h.compose(&id).unwrap(), h);
        assert!(matches!(
            h.compose(&id[..1]),
            Err(PolyError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn display_roundtrip_shape() {
        let p = Polynomial::from_terms([
            (Monomial::one(), 0.027),
            (Monomial::var_pow(3, 4), -3.91),
            (Monomial::var(2), 1.0),
        ]);
        assert_eq!(p.to_string(), "-3.91*x4^4 + x3 + 0.027");
    }
}
