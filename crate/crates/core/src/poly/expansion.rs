use std::collections::BTreeMap;

use super::{Monomial, ParamPolynomial, PolyError, PolyMatrix, Polynomial, VarId};

/// Multi-index over the inputs, stored as a monomial in input ids `0..m`.
pub type InputIndex = Monomial;

/// `h(f(x) + g(x) u) = sum_alpha coeff_alpha(x) u^alpha`.
///
/// Coefficients are grouped by input multi-index; `a` terms have total
/// input degree at least two, `b_i` is the coefficient of `u_i` and `c` the
/// input-free part.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyExpansion {
    pub n: usize,
    pub m: usize,
    coeffs: BTreeMap<InputIndex, ParamPolynomial>,
}

/// Expands `h(f(x) + g(x) u)` in powers of `u`.
///
/// State variables are `0..n`; `h` must only use those.
pub fn expand_in_policy(
    h: &ParamPolynomial,
    f: &[Polynomial],
    g: &PolyMatrix,
) -> Result<PolicyExpansion, PolyError> {
    let n = f.len();
    let (gr, m) = g.shape();
    if gr != n {
        return Err(PolyError::ShapeMismatch(format!(
            "g has {gr} rows but f has {n} entries"
        )));
    }
    let subs: Vec<Polynomial> = (0..n)
        .map(|i| {
            let mut s = f[i].clone();
            for j in 0..m {
                s = &s + &(g.get(i, j) * &Polynomial::var((n + j) as VarId));
            }
            s
        })
        .collect();
    let composed = h.compose(&subs)?;
    let mut coeffs: BTreeMap<InputIndex, ParamPolynomial> = BTreeMap::new();
    for (mono, e) in composed.terms() {
        let (xpart, upart) = mono.split_at_var(n as VarId);
        let idx = Monomial::from_pairs(upart.pairs().iter().map(|&(v, k)| (v - n as VarId, k)));
        coeffs.entry(idx).or_default().add_term(xpart, e);
    }
    coeffs.retain(|_, p| !p.is_zero());
    Ok(PolicyExpansion { n, m, coeffs })
}

impl PolicyExpansion {
    /// All coefficients, including `b` and `c`.
    pub fn coefficients(&self) -> &BTreeMap<InputIndex, ParamPolynomial> {
        &self.coeffs
    }

    pub fn coefficient(&self, idx: &InputIndex) -> ParamPolynomial {
        self.coeffs.get(idx).cloned().unwrap_or_default()
    }

    /// Coefficients of input products of degree at least two.
    pub fn a(&self) -> impl Iterator<Item = (&InputIndex, &ParamPolynomial)> + '_ {
        self.coeffs.iter().filter(|(k, _)| k.degree() >= 2)
    }

    pub fn b(&self, i: usize) -> ParamPolynomial {
        self.coefficient(&Monomial::var(i as VarId))
    }

    pub fn c(&self) -> ParamPolynomial {
        self.coefficient(&Monomial::one())
    }

    /// Largest input degree appearing.
    pub fn max_input_degree(&self) -> u32 {
        self.coeffs.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Numeric coefficient for multi-index `idx` (decision variables must be
    /// absent).
    pub fn numeric(&self, idx: &InputIndex) -> Option<Polynomial> {
        self.coefficient(idx).as_constant()
    }

    /// `sum_alpha coeff_alpha * prod(alpha)` where `prod` supplies the
    /// polynomial standing in for `u^alpha`.
    pub fn recombine_with(
        &self,
        mut prod: impl FnMut(&InputIndex) -> Polynomial,
    ) -> ParamPolynomial {
        let mut out = ParamPolynomial::zero();
        for (idx, coeff) in &self.coeffs {
            let p = prod(idx);
            out.add_assign_scaled(&coeff.mul_poly(&p), 1.0);
        }
        out
    }

    /// Recombines with the policy `pi`, reproducing `h(f + g pi)`.
    pub fn recombine(&self, pi: &[Polynomial]) -> ParamPolynomial {
        self.recombine_with(|idx| policy_power(pi, idx))
    }
}

/// `pi^alpha` for an input multi-index.
pub fn policy_power(pi: &[Polynomial], idx: &InputIndex) -> Polynomial {
    let mut out = Polynomial::constant(1.0);
    for &(v, e) in idx.pairs() {
        out = &out * &pi[v as usize].pow(e);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::DecVar;

    #[test]
    fn scalar_example() {
        // h = t0 + t1 x + t2 x^2, f = x, g = 1
        let h = ParamPolynomial::linear_combination([
            (DecVar(0), Monomial::one()),
            (DecVar(1), Monomial::var(0)),
            (DecVar(2), Monomial::var_pow(0, 2)),
        ]);
        let g = PolyMatrix::from_rows(vec![vec![Polynomial::constant(1.0)]]).unwrap();
        let e = expand_in_policy(&h, &[Polynomial::var(0)], &g).unwrap();
        let a: Vec<_> = e.a().collect();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].0, &Monomial::var_pow(0, 2));
        assert_eq!(a[0].1, &ParamPolynomial::var_times(DecVar(2), &Polynomial::constant(1.0)));
        let b = e.b(0);
        let b_expect = ParamPolynomial::var_times(DecVar(1), &Polynomial::constant(1.0)).add(
            &ParamPolynomial::var_times(DecVar(2), &Polynomial::var(0).scale(2.0)),
        );
        assert_eq!(b, b_expect);
        assert_eq!(e.c(), h);
    }

    #[test]
    fn constant_h() {
        let h = ParamPolynomial::constant(2.5);
        let g = PolyMatrix::from_rows(vec![vec![Polynomial::var(0)]]).unwrap();
        let e = expand_in_policy(&h, &[Polynomial::var(0)], &g).unwrap();
        assert_eq!(e.a().count(), 0);
        assert!(e.b(0).is_zero());
        assert_eq!(e.c(), h);
    }
}
