use dtcbf::poly::{
    expand_in_policy, parse_polynomial, AffineExpr, DecVar, Monomial, ParamPolynomial, PolyError, PolyMatrix,
    Polynomial, VarId, VarNames,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn poly_strategy(nvars: usize, max_deg: u32, max_terms: usize) -> impl Strategy<Value = Polynomial> {
    let term = (prop::collection::vec(0..=max_deg, nvars), -2.0f64..2.0);
    prop::collection::vec(term, 0..=max_terms).prop_map(move |terms| {
        Polynomial::from_terms(terms.into_iter().map(|(mut e, c)| {
            // trim to total degree max_deg
            while e.iter().sum::<u32>() > max_deg {
                let i = e.iter().position(|&k| k > 0).unwrap();
                e[i] -= 1;
            }
            (Monomial::from_exponents(&e), c)
        }))
    })
}

fn point_strategy(nvars: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, nvars)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn product_evaluates_pointwise(p in poly_strategy(3, 4, 6), q in poly_strategy(3, 4, 6), x in point_strategy(3)) {
        let pq = &p * &q;
        prop_assert!(close(pq.eval(&x), p.eval(&x) * q.eval(&x), 1e-9));
    }

    #[test]
    fn ring_axioms_at_points(
        p in poly_strategy(3, 3, 5),
        q in poly_strategy(3, 3, 5),
        r in poly_strategy(3, 3, 5),
        x in point_strategy(3),
    ) {
        let assoc_l = &(&p + &q) + &r;
        let assoc_r = &p + &(&q + &r);
        prop_assert!(close(assoc_l.eval(&x), assoc_r.eval(&x), 1e-9));
        let dist_l = &p * &(&q + &r);
        let dist_r = &(&p * &q) + &(&p * &r);
        prop_assert!(close(dist_l.eval(&x), dist_r.eval(&x), 1e-9));
    }

    #[test]
    fn degree_of_product_is_sum(p in poly_strategy(2, 4, 5), q in poly_strategy(2, 4, 5)) {
        prop_assume!(!p.is_zero() && !q.is_zero());
        let pq = &p * &q;
        // Leading forms multiply without cancellation over the reals only
        // when the product of the top-degree forms is nonzero.
        let top = |a: &Polynomial| Polynomial::from_terms(a.terms().filter(|(m, _)| m.degree() == a.degree()).map(|(m, c)| (m.clone(), c)));
        prop_assume!(!(&top(&p) * &top(&q)).is_zero());
        prop_assert_eq!(pq.degree(), p.degree() + q.degree());
    }

    #[test]
    fn composition_commutes_with_evaluation(
        h in poly_strategy(2, 3, 6),
        a in poly_strategy(2, 1, 3),
        b in poly_strategy(2, 1, 3),
        x in point_strategy(2),
    ) {
        let subs = vec![a.clone(), b.clone()];
        let composed = h.compose(&subs).unwrap();
        let inner = [a.eval(&x), b.eval(&x)];
        prop_assert!(close(composed.eval(&x), h.eval(&inner), 1e-9));
    }

    #[test]
    fn canonical_form_has_no_zero_terms(p in poly_strategy(3, 3, 6), q in poly_strategy(3, 3, 6)) {
        let d = &(&p - &q) + &q;
        prop_assert!(d.terms().all(|(_, c)| c != 0.0));
        prop_assert!(d.terms().all(|(m, _)| m.pairs().iter().all(|&(_, e)| e > 0)));
    }

    #[test]
    fn text_round_trip(p in poly_strategy(3, 4, 6)) {
        let back = parse_polynomial(&p.to_string(), &VarNames::new(3, 0)).unwrap();
        prop_assert_eq!(back, p);
    }

    /// Random expression trees over decision-bearing and numeric leaves:
    /// a product fails exactly when both operands carry decision variables.
    #[test]
    fn bilinear_guard_is_complete(ops in prop::collection::vec((0u8..3, any::<bool>(), 0usize..4), 1..12)) {
        let leaf = |with_var: bool, k: usize| -> ParamPolynomial {
            let p = Polynomial::from_terms([(Monomial::var_pow(0, k as u32 % 3), 1.0 + k as f64)]);
            if with_var {
                ParamPolynomial::var_times(DecVar(k as u32), &p)
            } else {
                ParamPolynomial::from_poly(&p)
            }
        };
        let mut acc = leaf(false, 1);
        for (op, with_var, k) in ops {
            let rhs = leaf(with_var, k);
            match op {
                0 => acc = acc.add(&rhs),
                1 => acc = acc.sub(&rhs.scale(0.5)),
                _ => {
                    let expect_err = acc.has_vars() && rhs.has_vars();
                    match acc.try_mul(&rhs) {
                        Err(PolyError::BilinearProduct) => prop_assert!(expect_err),
                        Ok(p) => {
                            prop_assert!(!expect_err);
                            acc = p;
                        }
                        Err(e) => prop_assert!(false, "unexpected error {e}"),
                    }
                }
            }
        }
    }
}

#[test]
fn difference_of_squares_and_guard() {
    let x = Polynomial::var(0);
    let one = Polynomial::constant(1.0);
    let p = &(&x + &one) * &(&x - &one);
    assert_eq!(p, Polynomial::from_terms([(Monomial::var_pow(0, 2), 1.0), (Monomial::one(), -1.0)]));
    let a = ParamPolynomial::var_times(DecVar(2), &Polynomial::term(Monomial::var_pow(0, 2), 1.0));
    let b = ParamPolynomial::var_times(DecVar(1), &x);
    assert_eq!(a.try_mul(&b), Err(PolyError::BilinearProduct));
}

#[test]
fn evaluate_checks_dimension() {
    let s = parse_polynomial("x1^2 + x2^2 - 3", &VarNames::new(2, 0)).unwrap();
    assert_eq!(s.evaluate(&[1.0, 1.0]).unwrap(), -1.0);
    assert!(matches!(s.evaluate(&[1.0]), Err(PolyError::DimensionMismatch { .. })));
    assert_eq!(Polynomial::zero().evaluate(&[]).unwrap(), 0.0);
}

#[test]
fn coefficient_of_absent_monomial_is_zero() {
    let p = ParamPolynomial::var_times(DecVar(0), &Polynomial::var(0));
    assert!(p.coefficient_of(&Monomial::var_pow(0, 2)).is_zero());
    assert_eq!(p.coefficient_of(&Monomial::var(0)), AffineExpr::var(DecVar(0)));
}

#[test]
fn compose_arity_mismatch() {
    let h = Polynomial::var(1);
    assert!(matches!(h.compose(&[Polynomial::var(0)]), Err(PolyError::ArityMismatch { .. })));
}

/// `h = t0 + t1 x + t2 x^2` composed with `x + k1 + k2 x` for numeric `k`.
#[test]
fn compose_affine_substitution_in_one_variable() {
    let h = ParamPolynomial::linear_combination([
        (DecVar(0), Monomial::one()),
        (DecVar(1), Monomial::var(0)),
        (DecVar(2), Monomial::var_pow(0, 2)),
    ]);
    let (k1, k2) = (0.3, -0.7);
    let sub = Polynomial::from_terms([(Monomial::var(0), 1.0 + k2), (Monomial::one(), k1)]);
    let c = h.compose(&[sub]).unwrap();
    let x2 = c.coefficient_of(&Monomial::var_pow(0, 2));
    assert!((x2.weight(DecVar(2)) - (1.0 + 2.0 * k2 + k2 * k2)).abs() < 1e-12);
    let x1 = c.coefficient_of(&Monomial::var(0));
    assert!((x1.weight(DecVar(1)) - (1.0 + k2)).abs() < 1e-12);
    assert!((x1.weight(DecVar(2)) - (2.0 * k1 + 2.0 * k1 * k2)).abs() < 1e-12);
    let x0 = c.coefficient_of(&Monomial::one());
    assert!((x0.weight(DecVar(2)) - k1 * k1).abs() < 1e-12);
}

fn cartpole() -> (Vec<Polynomial>, PolyMatrix) {
    let names = VarNames::new(4, 0);
    let p = |t: &str| parse_polynomial(t, &names).unwrap();
    let f = vec![p("x2"), p("-0.98*x3"), p("x4"), p("10.78*x3")];
    let g = PolyMatrix::from_rows(vec![vec![p("0")], vec![p("1")], vec![p("0")], vec![p("-1")]]).unwrap();
    (f, g)
}

/// Quartic `h` on the cart-pole plant: recombination with random numeric
/// policies equals direct composition.
#[test]
fn recombination_matches_composition_on_quartic_barrier() {
    let (f, g) = cartpole();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let vars: Vec<VarId> = (0..4).collect();
    let basis = Monomial::all_up_to(&vars, 0, 4);
    let h_param = ParamPolynomial::linear_combination(basis.iter().enumerate().map(|(i, m)| (DecVar(i as u32), m.clone())));
    let exp = expand_in_policy(&h_param, &f, &g).unwrap();
    assert_eq!(exp.max_input_degree(), 4);
    for _ in 0..10 {
        let theta: Vec<f64> = (0..basis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = h_param.instantiate(&theta);
        let pi = vec![Polynomial::from_terms(
            Monomial::all_up_to(&vars, 0, 2).into_iter().map(|m| (m, rng.gen_range(-1.0..1.0))),
        )];
        let direct = h.compose(&(0..4).map(|i| &f[i] + &(g.get(i, 0) * &pi[0])).collect::<Vec<_>>()).unwrap();
        let recombined = exp.recombine(&pi).instantiate(&theta);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!((direct.eval(&x) - recombined.eval(&x)).abs() <= 1e-10 * (1.0 + direct.eval(&x).abs()));
        }
    }
}

/// Recombination identity over random instantiations of the decision
/// variables, on a nonlinear two-input plant.
#[test]
fn recombination_identity_for_random_instantiations() {
    let names = VarNames::new(2, 0);
    let p = |t: &str| parse_polynomial(t, &names).unwrap();
    let f = vec![p("x1 + x2"), p("x1 + 2*x2 + 0.3*x1^3")];
    let g = PolyMatrix::from_rows(vec![vec![p("x1^2 + x2 + 1"), p("0")], vec![p("0"), p("x2^2 + x1 + 1")]]).unwrap();
    let basis = Monomial::all_up_to(&[0, 1], 0, 2);
    let h = ParamPolynomial::linear_combination(basis.iter().enumerate().map(|(i, m)| (DecVar(i as u32), m.clone())));
    let exp = expand_in_policy(&h, &f, &g).unwrap();
    assert!(exp.a().all(|(alpha, _)| alpha.degree() == 2));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let theta: Vec<f64> = (0..basis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pi: Vec<Polynomial> = (0..2)
            .map(|_| Polynomial::from_terms(basis.iter().map(|m| (m.clone(), rng.gen_range(-1.0..1.0)))))
            .collect();
        let hn = h.instantiate(&theta);
        let rec = exp.recombine(&pi).instantiate(&theta);
        for _ in 0..50 {
            let x = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
            let u: Vec<f64> = pi.iter().map(|q| q.eval(&x)).collect();
            let next = [
                f[0].eval(&x) + g.get(0, 0).eval(&x) * u[0],
                f[1].eval(&x) + g.get(1, 1).eval(&x) * u[1],
            ];
            assert!((rec.eval(&x) - hn.eval(&next)).abs() <= 1e-9 * (1.0 + hn.eval(&next).abs()));
        }
    }
}

#[test]
fn expansion_of_scalar_quadratic() {
    // h = t0 + t1 x + t2 x^2, f = x, g = 1
    let h = ParamPolynomial::linear_combination([
        (DecVar(0), Monomial::one()),
        (DecVar(1), Monomial::var(0)),
        (DecVar(2), Monomial::var_pow(0, 2)),
    ]);
    let g = PolyMatrix::from_rows(vec![vec![Polynomial::constant(1.0)]]).unwrap();
    let exp = expand_in_policy(&h, &[Polynomial::var(0)], &g).unwrap();
    let a: Vec<_> = exp.a().collect();
    assert_eq!(a.len(), 1);
    assert_eq!(a[0].1, &ParamPolynomial::linear_combination([(DecVar(2), Monomial::one())]));
    let b = exp.b(0);
    assert_eq!(b.coefficient_of(&Monomial::one()), AffineExpr::var(DecVar(1)));
    assert_eq!(b.coefficient_of(&Monomial::var(0)), AffineExpr::term(DecVar(2), 2.0));
    assert_eq!(exp.c(), h);
}

#[test]
fn expansion_of_constant() {
    let g = PolyMatrix::from_rows(vec![vec![Polynomial::constant(1.0)]]).unwrap();
    let h = ParamPolynomial::constant(2.5);
    let exp = expand_in_policy(&h, &[Polynomial::var(0)], &g).unwrap();
    assert_eq!(exp.a().count(), 0);
    assert!(exp.b(0).is_zero());
    assert_eq!(exp.c(), h);
}
