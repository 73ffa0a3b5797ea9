use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::polynomial::{check_arity, PowerCache};
use super::{AffineExpr, DecVar, Monomial, PolyError, Polynomial, VarId, COEFF_TOL};

/// Polynomial whose coefficients are affine in decision variables.
#[derive(Clone, PartialEq, Default)]
pub struct ParamPolynomial {
    terms: BTreeMap<Monomial, AffineExpr>,
}

impl ParamPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::from_poly(&Polynomial::constant(c))
    }

    pub fn from_poly(p: &Polynomial) -> Self {
        let mut out = Self::zero();
        for (m, c) in p.terms() {
            out.add_term(m.clone(), &AffineExpr::constant(c));
        }
        out
    }

    /// `v * p` for a single decision variable `v`.
    pub fn var_times(v: DecVar, p: &Polynomial) -> Self {
        let mut out = Self::zero();
        for (m, c) in p.terms() {
            out.add_term(m.clone(), &AffineExpr::term(v, c));
        }
        out
    }

    /// `sum_k v_k * m_k`.
    pub fn linear_combination(pairs: impl IntoIterator<Item = (DecVar, Monomial)>) -> Self {
        let mut out = Self::zero();
        for (v, m) in pairs {
            out.add_term(m, &AffineExpr::var(v));
        }
        out
    }

    pub fn add_term(&mut self, m: Monomial, e: &AffineExpr) {
        use std::collections::btree_map::Entry;
        if e.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                if !negligible(e) {
                    v.insert(e.clone());
                }
            }
            Entry::Occupied(mut o) => {
                o.get_mut().add_scaled(e, 1.0);
                if negligible(o.get()) {
                    o.remove();
                }
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &AffineExpr)> + '_ {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// True when some coefficient references a decision variable.
    pub fn has_vars(&self) -> bool {
        self.terms.values().any(AffineExpr::has_vars)
    }

    pub fn decision_vars(&self) -> BTreeSet<DecVar> {
        self.terms
            .values()
            .flat_map(|e| e.terms.keys().copied())
            .collect()
    }

    /// Returns the numeric polynomial if no decision variables are present.
    pub fn as_constant(&self) -> Option<Polynomial> {
        if self.has_vars() {
            return None;
        }
        Some(Polynomial::from_terms(
            self.terms.iter().map(|(m, e)| (m.clone(), e.constant)),
        ))
    }

    pub fn coefficient_of(&self, m: &Monomial) -> AffineExpr {
        self.terms.get(m).cloned().unwrap_or_default()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn vars(&self) -> BTreeSet<VarId> {
        self.terms.keys().flat_map(|m| m.vars()).collect()
    }

    pub fn max_var(&self) -> Option<VarId> {
        self.terms.keys().filter_map(Monomial::max_var).max()
    }

    pub fn monomials(&self) -> impl Iterator<Item = &Monomial> + '_ {
        self.terms.keys()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero();
        for (m, e) in &self.terms {
            out.add_term(m.clone(), &e.scale(s));
        }
        out
    }

    pub fn add(&self, other: &ParamPolynomial) -> Self {
        let mut out = self.clone();
        out.add_assign_scaled(other, 1.0);
        out
    }

    pub fn sub(&self, other: &ParamPolynomial) -> Self {
        let mut out = self.clone();
        out.add_assign_scaled(other, -1.0);
        out
    }

    pub fn add_assign_scaled(&mut self, other: &ParamPolynomial, s: f64) {
        for (m, e) in &other.terms {
            self.add_term(m.clone(), &e.scale(s));
        }
    }

    pub fn add_poly(&self, p: &Polynomial) -> Self {
        self.add(&ParamPolynomial::from_poly(p))
    }

    /// Product with a numeric polynomial; always linear.
    pub fn mul_poly(&self, p: &Polynomial) -> Self {
        let mut acc: BTreeMap<Monomial, AffineExpr> = BTreeMap::new();
        for (ma, ea) in &self.terms {
            for (mb, cb) in p.terms() {
                acc.entry(ma.mul(mb)).or_default().add_scaled(ea, cb);
            }
        }
        acc.retain(|_, e| !negligible(e));
        ParamPolynomial { terms: acc }
    }

    /// Product of two parameterized polynomials; fails when both depend on
    /// decision variables.
    pub fn try_mul(&self, other: &ParamPolynomial) -> Result<Self, PolyError> {
        match (self.as_constant(), other.as_constant()) {
            (Some(p), _) => Ok(other.mul_poly(&p)),
            (_, Some(q)) => Ok(self.mul_poly(&q)),
            _ => Err(PolyError::BilinearProduct),
        }
    }

    /// Substitutes numeric polynomials for the indeterminates; the result
    /// stays linear in the decision variables.
    pub fn compose(&self, subs: &[Polynomial]) -> Result<Self, PolyError> {
        check_arity(self.max_var(), subs.len())?;
        let mut cache = PowerCache::new(subs);
        let mut acc: BTreeMap<Monomial, AffineExpr> = BTreeMap::new();
        for (m, e) in &self.terms {
            let p = cache.monomial(m);
            for (mm, c) in p.terms() {
                acc.entry(mm.clone()).or_default().add_scaled(e, c);
            }
        }
        acc.retain(|_, e| !negligible(e));
        Ok(ParamPolynomial { terms: acc })
    }

    /// Replaces every decision variable by its value.
    pub fn instantiate(&self, values: &[f64]) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(m, e)| (m.clone(), e.eval(values))))
    }

    /// Evaluates at `point` keeping the decision-variable dependence.
    pub fn eval_point(&self, point: &[f64]) -> AffineExpr {
        let mut out = AffineExpr::zero();
        for (m, e) in &self.terms {
            out.add_scaled(e, m.eval(point));
        }
        out
    }

    /// Largest absolute weight or constant over all coefficients.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, e| a.max(e.max_abs()))
    }
}

fn negligible(e: &AffineExpr) -> bool {
    !e.has_vars() && e.constant.abs() < COEFF_TOL
}

impl From<&Polynomial> for ParamPolynomial {
    fn from(p: &Polynomial) -> Self {
        ParamPolynomial::from_poly(p)
    }
}

impl fmt::Debug for ParamPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, e)) in self.terms.iter().rev().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({e:?})*{m}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_guard() {
        let a = ParamPolynomial::var_times(DecVar(2), &Polynomial::var(0).pow(2));
        let b = ParamPolynomial::var_times(DecVar(1), &Polynomial::var(0));
        assert_eq!(a.try_mul(&b), Err(PolyError::BilinearProduct));
        let c = ParamPolynomial::from_poly(&Polynomial::var(0));
        let ac = a.try_mul(&c).unwrap();
        assert_eq!(ac.degree(), 3);
        assert_eq!(ac.coefficient_of(&Monomial::var_pow(0, 3)), AffineExpr::var(DecVar(2)));
        assert!(ac.coefficient_of(&Monomial::one()).is_zero());
    }

    #[test]
    fn compose_example_expansion() {
        // h = t0 + t1 x + t2 x^2 under x -> x + k1 + k2 x
        let (k1, k2) = (0.3, -0.7);
        let h = ParamPolynomial::linear_combination([
            (DecVar(0), Monomial::one()),
            (DecVar(1), Monomial::var(0)),
            (DecVar(2), Monomial::var_pow(0, 2)),
        ]);
        let sub = Polynomial::from_terms([(Monomial::one(), k1), (Monomial::var(0), 1.0 + k2)]);
        let out = h.compose(&[sub]).unwrap();
        let x2 = out.coefficient_of(&Monomial::var_pow(0, 2));
        assert!((x2.weight(DecVar(2)) - (1.0 + 2.0 * k2 + k2 * k2)).abs() < 1e-14);
        let x1 = out.coefficient_of(&Monomial::var(0));
        assert!((x1.weight(DecVar(1)) - (1.0 + k2)).abs() < 1e-14);
        assert!((x1.weight(DecVar(2)) - (2.0 * k1 + 2.0 * k1 * k2)).abs() < 1e-14);
        let x0 = out.coefficient_of(&Monomial::one());
        assert!((x0.weight(DecVar(0)) - 1.0).abs() < 1e-14);
        assert!((x0.weight(DecVar(1)) - k1).abs() < 1e-14);
        assert!((x0.weight(DecVar(2)) - k1 * k1).abs() < 1e-14);
    }
}
