//! Constraints replacing products of policy entries by auxiliary polynomials.
//!
//! For a multi-index `alpha` with coefficient `a` in `h(f + g u)` the stand-in
//! `w` for `pi^alpha` must satisfy `a (pi^alpha - w) >= 0` wherever `h >= 0`.
//! Where `a <= 0` this needs `w >= pi^alpha` (lower bounds), where `a >= 0`
//! it needs `w <= pi^alpha` (upper bounds). Degree-two products use the
//! matrix and scalar SOS conditions of the product propositions; higher
//! products chain lower bounds left to right and bound `w <= 0` on the other
//! side, which needs every factor to be non-negative.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::poly::{
    policy_power, InputIndex, Monomial, ParamPolynomial, PolicyExpansion, Polynomial, VarId,
};
use crate::sdp::SdpBackend;
use crate::sosir::{SosProgram, Tolerances};

use super::{Degrees, SynthError};

/// Coefficients smaller than this in every monomial count as zero.
pub(crate) const ZERO_TOL: f64 = 1e-9;

/// Sign of a coefficient `a_alpha(x)` on the zero-superlevel set of the
/// current barrier.
///
/// The sign decides which half of the product bounds is imposed. Imposing
/// both halves forces `pi^alpha = 0` wherever `a_alpha` vanishes inside that
/// set, so when `a_alpha` has a fixed sign only the relevant half is used
/// and Step 2 keeps that sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignClass {
    Zero,
    NonPositive,
    NonNegative,
    Indefinite,
}

impl SignClass {
    /// Needs `w >= pi^alpha` where `a <= 0`.
    pub fn needs_lower(self) -> bool {
        matches!(self, SignClass::NonPositive | SignClass::Indefinite)
    }

    /// Needs `w <= pi^alpha` where `a >= 0`.
    pub fn needs_upper(self) -> bool {
        matches!(self, SignClass::NonNegative | SignClass::Indefinite)
    }
}

/// Multiplier `lambda` of degree `deg` with `p - lambda h` SOS, if any.
fn sign_certificate(p: &Polynomial, h: &Polynomial, deg: u32, n: usize, backend: &dyn SdpBackend, tol: &Tolerances) -> Option<Polynomial> {
    let vars: Vec<VarId> = (0..n as VarId).collect();
    let mut prog = SosProgram::new();
    let lambda = prog.sos_multiplier(&vars, deg, "lambda");
    prog.add_scalar_sos(ParamPolynomial::from_poly(p).sub(&lambda.mul_poly(h)), "sign");
    let sol = prog.solve(backend, tol).ok()?;
    Some(sol.instantiate(&lambda))
}

/// Classifies `a` on `{h >= 0}`: zero, non-positive or non-negative (by an
/// SOS certificate `-/+a - lambda h`), or indefinite. Also returns
/// `lambda`, zero when no certificate is needed.
pub fn classify(
    a: &Polynomial,
    h: &Polynomial,
    n: usize,
    backend: &dyn SdpBackend,
    tol: &Tolerances,
) -> (SignClass, Polynomial) {
    if a.max_abs_coeff() <= ZERO_TOL {
        return (SignClass::Zero, Polynomial::zero());
    }
    if a.degree() == 0 {
        let class = if a.coefficient(&Monomial::one()) > 0.0 {
            SignClass::NonNegative
        } else {
            SignClass::NonPositive
        };
        return (class, Polynomial::zero());
    }
    // A point with h >= 0 decides which sign to try first.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let scale = a.max_abs_coeff();
    let mut lean = 0.0;
    for _ in 0..256 {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        if h.eval(&x) >= 0.0 {
            lean += a.eval(&x) / scale;
        }
    }
    let deg = a.degree().saturating_sub(h.degree()).div_ceil(2) * 2;
    let order = if lean > 0.0 {
        [SignClass::NonNegative, SignClass::NonPositive]
    } else {
        [SignClass::NonPositive, SignClass::NonNegative]
    };
    for class in order {
        let p = if class == SignClass::NonPositive { -a } else { a.clone() };
        if let Some(lambda) = sign_certificate(&p, h, deg, n, backend, tol) {
            return (class, lambda);
        }
    }
    (SignClass::Indefinite, Polynomial::zero())
}

/// Creates multipliers and auxiliary polynomials, or looks them up when
/// re-imposing constraints with everything but `h` fixed.
pub(crate) struct Aux<'a> {
    pub prog: &'a mut SosProgram,
    vars: Vec<VarId>,
    fixed: Option<&'a BTreeMap<String, Polynomial>>,
    pub created: BTreeMap<String, ParamPolynomial>,
}

impl<'a> Aux<'a> {
    pub fn new(
        prog: &'a mut SosProgram,
        vars: Vec<VarId>,
        fixed: Option<&'a BTreeMap<String, Polynomial>>,
    ) -> Self {
        Aux {
            prog,
            vars,
            fixed,
            created: BTreeMap::new(),
        }
    }

    fn lookup(&self, label: &str) -> Result<Option<ParamPolynomial>, SynthError> {
        match self.fixed {
            None => Ok(None),
            Some(map) => map
                .get(label)
                .map(|p| Some(ParamPolynomial::from_poly(p)))
                .ok_or_else(|| SynthError::Config(format!("no fixed value for {label}"))),
        }
    }

    /// SOS multiplier; fixed when re-imposing.
    pub fn multiplier(&mut self, label: String, degree: u32) -> Result<ParamPolynomial, SynthError> {
        let p = match self.lookup(&label)? {
            Some(p) => p,
            None => self.prog.sos_multiplier(&self.vars, degree, &label),
        };
        self.created.insert(label, p.clone());
        Ok(p)
    }

    /// Auxiliary product polynomial; fixed when re-imposing.
    pub fn product(&mut self, label: String, degree: u32) -> Result<ParamPolynomial, SynthError> {
        let p = match self.lookup(&label)? {
            Some(p) => p,
            None => self.prog.free_poly(&self.vars, degree),
        };
        self.created.insert(label, p.clone());
        Ok(p)
    }

    /// Free slack polynomial, always a fresh unknown.
    pub fn slack(&mut self, label: String, degree: u32) -> ParamPolynomial {
        let p = self.prog.free_poly(&self.vars, degree);
        self.created.insert(label, p.clone());
        p
    }

    fn psd2(&mut self, p: &ParamPolynomial, t: ParamPolynomial, label: &str) -> Result<(), SynthError> {
        let one = ParamPolynomial::constant(1.0);
        self.prog
            .add_matrix_sos(vec![vec![one, p.clone()], vec![p.clone(), t]], label)
            .map_err(SynthError::from)?;
        Ok(())
    }
}

/// Text form of a multi-index, e.g. `u1^2u2`.
pub(crate) fn alpha_label(alpha: &InputIndex) -> String {
    let mut s = String::new();
    for &(v, e) in alpha.pairs() {
        s.push_str(&format!("u{}", v + 1));
        if e > 1 {
            s.push_str(&format!("^{e}"));
        }
    }
    s
}

/// Input indices of `alpha` with multiplicity, ascending.
fn factors(alpha: &InputIndex) -> Vec<usize> {
    alpha
        .pairs()
        .iter()
        .flat_map(|&(v, e)| std::iter::repeat(v as usize).take(e as usize))
        .collect()
}

/// Everything the product constraints for one expansion need.
pub(crate) struct RelaxSpec<'a> {
    /// `h` entering the multiplier terms (`h_prev` in Step 1, unknown in
    /// Step 2).
    pub h: &'a ParamPolynomial,
    pub expansion: &'a PolicyExpansion,
    pub pi: &'a [ParamPolynomial],
    pub pi_degrees: &'a [u32],
    pub classes: &'a BTreeMap<InputIndex, SignClass>,
    pub degrees: &'a Degrees,
    /// Allow products of degree three and more.
    pub cascade: bool,
    /// Multipliers of the sign certificates; when `h` is unknown the sign of
    /// each `a` is kept on `{h >= 0}` with these fixed.
    pub sign_multipliers: Option<&'a BTreeMap<InputIndex, Polynomial>>,
    /// When `h` is unknown and the policy fixed to these values, products
    /// whose coefficient vanished for `h_prev` enter exactly instead of
    /// being kept at zero.
    pub release: Option<&'a [Polynomial]>,
}

struct Term<'s, 'a> {
    spec: &'s RelaxSpec<'a>,
    key: String,
    a: ParamPolynomial,
}

impl Term<'_, '_> {
    /// `coef_h * h + coef_a * a` for multipliers `coef_*` with signs.
    fn hs(&self, m_h: &ParamPolynomial, s_h: f64, m_a: &ParamPolynomial, s_a: f64) -> Result<ParamPolynomial, SynthError> {
        let mut out = m_h.try_mul(self.spec.h)?.scale(s_h);
        out.add_assign_scaled(&m_a.try_mul(&self.a)?, s_a);
        Ok(out)
    }
}

/// `w >= p^2` where `a <= 0`: `[[1, p], [p, w - s1 h + s2 a]] >= 0`.
fn square_lower(aux: &mut Aux, t: &Term, p: &ParamPolynomial, w: &ParamPolynomial, tag: &str, deg: u32) -> Result<(), SynthError> {
    let s1 = aux.multiplier(format!("sigma1[{}]{tag}", t.key), deg)?;
    let s2 = aux.multiplier(format!("sigma2[{}]{tag}", t.key), deg)?;
    let entry = w.add(&t.hs(&s1, -1.0, &s2, 1.0)?);
    aux.psd2(p, entry, &format!("square_lower[{}]{tag}", t.key))
}

/// `2 w >= p^2 + q^2 >= 2 p q` where `a <= 0`, through slacks `Theta`.
fn product_lower(
    aux: &mut Aux,
    t: &Term,
    p: &ParamPolynomial,
    q: &ParamPolynomial,
    w: &ParamPolynomial,
    tag: &str,
    slack_deg: u32,
) -> Result<(), SynthError> {
    let d = t.spec.degrees.xi;
    let k = &t.key;
    let mut xi = Vec::with_capacity(8);
    for i in 1..=8 {
        xi.push(aux.multiplier(format!("xi{i}[{k}]{tag}"), d)?);
    }
    let th1 = aux.slack(format!("Theta1[{k}]{tag}"), slack_deg);
    let th2 = aux.slack(format!("Theta2[{k}]{tag}"), slack_deg);
    let th3 = aux.slack(format!("Theta3[{k}]{tag}"), slack_deg);
    aux.psd2(p, th1.add(&t.hs(&xi[0], -1.0, &xi[1], 1.0)?), &format!("product_lower1[{k}]{tag}"))?;
    aux.psd2(q, th2.add(&t.hs(&xi[2], -1.0, &xi[3], 1.0)?), &format!("product_lower2[{k}]{tag}"))?;
    aux.prog.add_scalar_sos(th3.add(&t.hs(&xi[4], -1.0, &xi[5], 1.0)?), &format!("product_lower3[{k}]{tag}"));
    let sum = w.scale(2.0).sub(&th1).sub(&th2).sub(&th3);
    aux.prog.add_scalar_sos(sum.add(&t.hs(&xi[6], -1.0, &xi[7], 1.0)?), &format!("product_lower4[{k}]{tag}"));
    Ok(())
}

/// `2 w <= -(p^2 + q^2) <= 2 p q` where `a >= 0`, through slacks `Delta`.
fn product_upper(
    aux: &mut Aux,
    t: &Term,
    p: &ParamPolynomial,
    q: &ParamPolynomial,
    w: &ParamPolynomial,
    slack_deg: u32,
) -> Result<(), SynthError> {
    let d = t.spec.degrees.eta;
    let k = &t.key;
    let mut eta = Vec::with_capacity(8);
    for i in 1..=8 {
        eta.push(aux.multiplier(format!("eta{i}[{k}]"), d)?);
    }
    let d1 = aux.slack(format!("Delta1[{k}]"), slack_deg);
    let d2 = aux.slack(format!("Delta2[{k}]"), slack_deg);
    let d3 = aux.slack(format!("Delta3[{k}]"), slack_deg);
    aux.psd2(p, d1.add(&t.hs(&eta[0], -1.0, &eta[1], -1.0)?), &format!("product_upper1[{k}]"))?;
    aux.psd2(q, d2.add(&t.hs(&eta[2], -1.0, &eta[3], -1.0)?), &format!("product_upper2[{k}]"))?;
    aux.prog.add_scalar_sos(d3.scale(-1.0).add(&t.hs(&eta[4], -1.0, &eta[5], -1.0)?), &format!("product_upper3[{k}]"));
    let sum = d3.sub(&d1).sub(&d2).sub(&w.scale(2.0));
    aux.prog.add_scalar_sos(sum.add(&t.hs(&eta[6], -1.0, &eta[7], -1.0)?), &format!("product_upper4[{k}]"));
    Ok(())
}

/// `w <= 0` where `a >= 0`: `-w - s1 h - s2 a` SOS.
fn sign_upper(aux: &mut Aux, t: &Term, w: &ParamPolynomial, names: (&str, &str), deg: u32, label: &str) -> Result<(), SynthError> {
    let s1 = aux.multiplier(format!("{}[{}]", names.0, t.key), deg)?;
    let s2 = aux.multiplier(format!("{}[{}]", names.1, t.key), deg)?;
    let expr = w.scale(-1.0).add(&t.hs(&s1, -1.0, &s2, -1.0)?);
    aux.prog.add_scalar_sos(expr, &format!("{label}[{}]", t.key));
    Ok(())
}

/// Adds the bounds for one multi-index and returns the stand-in for
/// `pi^alpha`.
fn product_stand_in(aux: &mut Aux, spec: &RelaxSpec, alpha: &InputIndex, a: &ParamPolynomial, class: SignClass) -> Result<ParamPolynomial, SynthError> {
    let idx = factors(alpha);
    let t = Term {
        spec,
        key: alpha_label(alpha),
        a: a.clone(),
    };
    let pd = |i: usize| spec.pi_degrees[i];
    let final_label = format!("pi_tilde[{}]", t.key);
    let quad_deg = |i: usize, j: usize| spec.degrees.pi_tilde.unwrap_or(2 * pd(i).max(pd(j)));
    let w = if class.needs_lower() {
        let mut prev = spec.pi[idx[0]].clone();
        let mut prev_deg = pd(idx[0]);
        for j in 1..idx.len() {
            let q = &spec.pi[idx[j]];
            let last = j + 1 == idx.len();
            let deg = if idx.len() == 2 {
                quad_deg(idx[0], idx[1])
            } else {
                2 * prev_deg.max(pd(idx[j]))
            };
            let label = if last {
                final_label.clone()
            } else {
                format!("mu_tilde[{}]#{}", t.key, j + 1)
            };
            let w = aux.product(label, deg)?;
            let tag = if idx.len() == 2 { String::new() } else { format!("#{}", j + 1) };
            if j == 1 && idx[0] == idx[1] {
                square_lower(aux, &t, &prev, &w, &tag, spec.degrees.sigma)?;
            } else {
                product_lower(aux, &t, &prev, q, &w, &tag, deg)?;
            }
            prev = w;
            prev_deg = deg;
        }
        prev
    } else {
        let deg = if idx.len() == 2 {
            quad_deg(idx[0], idx[1])
        } else {
            idx.iter().map(|&i| pd(i)).sum()
        };
        aux.product(final_label, deg)?
    };
    if class.needs_upper() {
        if idx.len() == 2 && idx[0] == idx[1] {
            sign_upper(aux, &t, &w, ("sigma3", "sigma4"), spec.degrees.sigma, "square_upper")?;
        } else if idx.len() == 2 {
            let deg = quad_deg(idx[0], idx[1]);
            product_upper(aux, &t, &spec.pi[idx[0]], &spec.pi[idx[1]], &w, deg)?;
        } else {
            sign_upper(aux, &t, &w, ("sigma_tilde1", "sigma_tilde2"), spec.degrees.sigma_tilde, "sign_upper")?;
        }
    }
    Ok(w)
}

/// `sum_alpha a_alpha w_alpha + sum_i b_i pi_i + c`, the relaxed value of
/// `h(f + g pi)`, with all product bounds added to the program. When `h`
/// is unknown the sign class of each `a_alpha` is imposed as well; indices
/// without a class were absent for `h_prev` and count as zero.
pub(crate) fn relaxed_value(aux: &mut Aux, spec: &RelaxSpec) -> Result<ParamPolynomial, SynthError> {
    let exp = spec.expansion;
    let mut out = exp.c();
    for (i, p) in spec.pi.iter().enumerate() {
        out = out.add(&exp.b(i).try_mul(p)?);
    }
    for (alpha, a) in exp.a() {
        let class = spec.classes.get(alpha).copied().unwrap_or(SignClass::Zero);
        let key = alpha_label(alpha);
        if a.has_vars() {
            let lambda_h = match spec.sign_multipliers.and_then(|m| m.get(alpha)) {
                Some(l) => ParamPolynomial::from_poly(l).try_mul(spec.h)?,
                None => ParamPolynomial::zero(),
            };
            match (class, spec.release) {
                (SignClass::Zero, Some(pi)) => {
                    out = out.add(&a.mul_poly(&policy_power(pi, alpha)));
                    continue;
                }
                (SignClass::Zero, None) => aux.prog.add_poly_eq(a),
                (SignClass::NonPositive, _) => {
                    aux.prog.add_scalar_sos(a.scale(-1.0).sub(&lambda_h), &format!("sign[{key}]"));
                }
                (SignClass::NonNegative, _) => {
                    aux.prog.add_scalar_sos(a.sub(&lambda_h), &format!("sign[{key}]"));
                }
                (SignClass::Indefinite, _) => {}
            }
        }
        if class == SignClass::Zero {
            continue;
        }
        if alpha.degree() > 2 && !spec.cascade {
            return Err(SynthError::Config(format!(
                "input product {key} has degree {}; use the cascaded or fixed-policy extension",
                alpha.degree()
            )));
        }
        let w = product_stand_in(aux, spec, alpha, a, class)?;
        out = out.add(&a.try_mul(&w)?);
    }
    Ok(out)
}

/// Result of [`build_cascade_constraints`]: the stand-in for each product
/// of degree three or more and every auxiliary polynomial created.
#[derive(Clone, Debug)]
pub struct CascadeConstraints {
    pub stand_ins: BTreeMap<InputIndex, ParamPolynomial>,
    pub aux: BTreeMap<String, ParamPolynomial>,
}

/// Adds chained product bounds for every term of degree at least three in
/// `expansion` (terms of lower degree are left alone). `mu` must be
/// non-negative where `h >= 0`; `classes` defaults to indefinite.
pub fn build_cascade_constraints(
    prog: &mut SosProgram,
    h: &ParamPolynomial,
    expansion: &PolicyExpansion,
    mu: &[ParamPolynomial],
    mu_degrees: &[u32],
    classes: &BTreeMap<InputIndex, SignClass>,
    degrees: &Degrees,
    vars: &[VarId],
) -> Result<CascadeConstraints, SynthError> {
    let spec = RelaxSpec {
        h,
        expansion,
        pi: mu,
        pi_degrees: mu_degrees,
        classes,
        degrees,
        cascade: true,
        sign_multipliers: None,
        release: None,
    };
    let mut aux = Aux::new(prog, vars.to_vec(), None);
    let mut stand_ins = BTreeMap::new();
    for (alpha, a) in expansion.a().filter(|(k, _)| k.degree() >= 3) {
        let class = classes.get(alpha).copied().unwrap_or(SignClass::Indefinite);
        if class == SignClass::Zero {
            continue;
        }
        stand_ins.insert(alpha.clone(), product_stand_in(&mut aux, &spec, alpha, a, class)?);
    }
    Ok(CascadeConstraints {
        stand_ins,
        aux: aux.created,
    })
}
