mod common;

use std::collections::BTreeMap;

use dtcbf::poly::{
    expand_in_policy, parse_polynomial, policy_power, InputIndex, Monomial, ParamPolynomial, PolyMatrix, Polynomial,
    VarNames,
};
use dtcbf::sdp::InteriorPoint;
use dtcbf::sosir::{Constraint, SosProgram, Tolerances};
use dtcbf::synth::{
    build_cascade_constraints, build_step1, build_step2, find_omega, run, run_fixed_policy, shift_by, shift_input,
    solve_step1, solve_step2, Degrees, Extension, InputPolytope, PlantModel, SafeSet, SignClass, Step2Input,
    Step2Outcome, SynthError, SynthesisConfig, Termination,
};
use dtcbf::verify::{check_triple, SamplingSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{cube, load, samples_of};

fn p1(t: &str) -> Polynomial {
    parse_polynomial(t, &VarNames::new(1, 1)).unwrap()
}

fn p2(t: &str) -> Polynomial {
    parse_polynomial(t, &VarNames::new(2, 2)).unwrap()
}

fn scalar_plant(f: &str) -> PlantModel {
    PlantModel::new(vec![p1(f)], PolyMatrix::from_rows(vec![vec![p1("1")]]).unwrap()).unwrap()
}

fn scalar_config(h0: &str, pi_degree: u32) -> SynthesisConfig {
    SynthesisConfig::new(
        p1(h0),
        Monomial::all_up_to(&[0], 0, 2),
        vec![Monomial::all_up_to(&[0], 0, pi_degree)],
    )
}

fn unit_input() -> InputPolytope {
    InputPolytope::from_box(&[-1.0], &[1.0]).unwrap()
}

#[test]
fn zero_policy_satisfies_scalar_decrease_by_hand() {
    // h = 1 - x^2, x+ = 0.5 x: h(x+) - h + 0.75 h = 0.75 x^2 + 0.75 (1 - x^2) = 0.75.
    let h = p1("1 - x1^2");
    let plant = scalar_plant("0.5*x1");
    let closed = plant.compose_closed_loop(&h, &[Polynomial::zero()]);
    let value = &(&closed - &h) + &h.scale(0.75);
    assert!(value.max_abs_diff(&Polynomial::constant(0.75)) < 1e-12);
}

#[test]
fn step1_scalar_reaches_three_quarters() {
    let plant = scalar_plant("0.5*x1");
    let cfg = scalar_config("1 - x1^2", 1);
    let h = cfg.h0.clone();
    let s1 = solve_step1(&build_step1(&h, &plant, &unit_input(), &cfg).unwrap(), &cfg, 1).unwrap();
    assert!(s1.gamma0 >= 0.75 - 1e-6, "gamma0 = {}", s1.gamma0);
    assert!(s1.gamma0 <= 1.0);
    for x in samples_of(&h, &cube(1, 2.0), 500, 1) {
        let u = s1.pi[0].eval(&x);
        assert!(u.abs() <= 1.0 + 1e-6, "inadmissible u = {u} at {x:?}");
        let next = plant.step(&x, &[u]);
        let dec = h.eval(&next) - h.eval(&x) + s1.gamma0 * h.eval(&x);
        assert!(dec >= -1e-6, "decrease {dec} at {x:?}");
    }
}

#[test]
fn step1_admits_constant_policy() {
    let plant = scalar_plant("0");
    let cfg = scalar_config("1 - x1^2", 0);
    let s1 = solve_step1(&build_step1(&cfg.h0, &plant, &unit_input(), &cfg).unwrap(), &cfg, 1).unwrap();
    assert_eq!(s1.pi[0].degree(), 0);
    assert!(s1.pi[0].eval(&[0.0]).abs() <= 1.0 + 1e-6);
}

#[test]
fn omega_for_scalar_plant() {
    let plant = scalar_plant("0.5*x1");
    let cfg = scalar_config("1 - x1^2", 1);
    let h = cfg.h0.clone();
    let (omega, certs) = find_omega(&h, &plant, &[Polynomial::zero()], 0.75, &cfg, 1).unwrap();
    assert!(certs.iter().all(|c| c.check().passes(&cfg.tolerances)));
    // 0.75 - Omega (1 - x^2) must be nonnegative everywhere.
    for i in 0..=400 {
        let x = [-4.0 + 0.02 * i as f64];
        assert!(omega.eval(&x) >= -1e-6);
        assert!(0.75 - omega.eval(&x) * h.eval(&x) >= -1e-6, "at {x:?}");
    }
}

#[test]
fn omega_when_policy_keeps_state_fixed() {
    // pi = 0.5 x makes x+ = x, so h(x+) - h + h = h and Omega = 1 works.
    let plant = scalar_plant("0.5*x1");
    let cfg = scalar_config("1 - x1^2", 1);
    let (omega, _) = find_omega(&cfg.h0, &plant, &[p1("0.5*x1")], 1.0, &cfg, 1).unwrap();
    for x in [-3.0, -1.0, 0.0, 0.5, 2.0] {
        let h = cfg.h0.eval(&[x]);
        assert!(h - omega.eval(&[x]) * h >= -1e-6);
    }
}

#[test]
fn nonlinear2d_step1_feasible_initially() {
    let spec = load("nonlinear2d.toml");
    let cfg = &spec.config;
    let p = build_step1(&cfg.h0, &spec.plant, &spec.input, cfg).unwrap();
    let s1 = solve_step1(&p, cfg, 1).unwrap();
    assert!(s1.gamma0 > 0.0 && s1.gamma0 <= 1.0);
    assert!(s1.certificates.iter().all(|c| c.check().passes(&cfg.tolerances)));
}

#[test]
fn empty_input_set_is_rejected() {
    assert_eq!(InputPolytope::from_box(&[1.0], &[-1.0]), Err(SynthError::InfeasibleInput));
    let err = InputPolytope::new(vec![vec![1.0], vec![-1.0]], vec![-2.0, 1.0]);
    assert_eq!(err, Err(SynthError::InfeasibleInput));
}

#[test]
fn shift_of_symmetric_box() {
    let spec = load("nonlinear2d.toml");
    let sh = shift_input(&spec.plant, &spec.input).unwrap();
    assert_eq!(sh.c, vec![1.5, 1.5]);
    let b = sh.polytope.bounds().unwrap();
    for (lo, hi) in b {
        assert!(lo.abs() < 1e-6 && (hi - 3.0).abs() < 1e-6);
    }
}

#[test]
fn shift_of_nonnegative_box_is_identity() {
    let spec = load("nonlinear2d.toml");
    let input = InputPolytope::from_box(&[0.0, 0.5], &[1.0, 2.0]).unwrap();
    let sh = shift_input(&spec.plant, &input).unwrap();
    assert!(sh.c.iter().all(|&c| c == 0.0));
    assert_eq!(sh.plant.f, spec.plant.f);
}

#[test]
fn shift_preserves_dynamics_on_random_boxes() {
    let spec = load("nonlinear2d.toml");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let lower: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..0.5)).collect();
        let upper: Vec<f64> = lower.iter().map(|l| l + rng.gen_range(0.1..3.0)).collect();
        let input = InputPolytope::from_box(&lower, &upper).unwrap();
        let sh = shift_input(&spec.plant, &input).unwrap();
        for (c, l) in sh.c.iter().zip(&lower) {
            assert!((c - (-l).max(0.0)).abs() < 1e-6);
        }
        for _ in 0..50 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let u: Vec<f64> = (0..2).map(|i| rng.gen_range(lower[i]..upper[i])).collect();
            let ut: Vec<f64> = u.iter().zip(&sh.c).map(|(u, c)| u + c).collect();
            let a = spec.plant.step(&x, &u);
            let b = sh.plant.step(&x, &ut);
            for (a, b) in a.iter().zip(&b) {
                assert!((a - b).abs() < 1e-9);
            }
            for r in 0..input.n_rows() {
                assert!((input.slack(r, &u) - sh.polytope.slack(r, &ut)).abs() < 1e-9);
            }
            assert!(ut.iter().all(|&v| v >= -1e-9));
        }
    }
}

#[test]
fn shift_by_given_vector() {
    let plant = scalar_plant("x1");
    let sh = shift_by(&plant, &unit_input(), vec![2.0]).unwrap();
    assert_eq!(sh.plant.f[0], p1("x1 - 2"));
}

fn identity_plant(n: usize) -> PlantModel {
    let f = (0..n).map(|i| Polynomial::var(i as u32)).collect();
    let mut g = PolyMatrix::zeros(n, n);
    for i in 0..n {
        g.set(i, i, Polynomial::constant(1.0));
    }
    PlantModel::new(f, g).unwrap()
}

fn cascade_degrees() -> Degrees {
    Degrees {
        sigma: 2,
        xi: 2,
        eta: 2,
        sigma_tilde: 2,
        ..Degrees::default()
    }
}

fn labels(prog: &SosProgram) -> Vec<String> {
    prog.constraints()
        .iter()
        .filter_map(|c| match c {
            Constraint::Scalar { label, .. } | Constraint::Matrix { label, .. } => Some(label.clone()),
            _ => None,
        })
        .collect()
}

#[test]
fn cascade_for_cube_builds_the_chain() {
    // h(x + u) = -(x + u)^3 has a_(3) = -1.
    let plant = identity_plant(1);
    let exp = expand_in_policy(&ParamPolynomial::from_poly(&p1("-x1^3")), &plant.f, &plant.g).unwrap();
    let region = ParamPolynomial::from_poly(&p1("1 - x1^2"));
    let mu = [ParamPolynomial::from_poly(&p1("1 + x1"))];
    let mut prog = SosProgram::new();
    let alpha = InputIndex::var_pow(0, 3);
    let classes = BTreeMap::from([(alpha.clone(), SignClass::NonPositive)]);
    let cc =
        build_cascade_constraints(&mut prog, &region, &exp, &mu, &[1], &classes, &cascade_degrees(), &[0]).unwrap();
    assert_eq!(cc.stand_ins.keys().collect::<Vec<_>>(), vec![&alpha]);
    let aux: Vec<&str> = cc.aux.keys().map(String::as_str).collect();
    for name in ["mu_tilde[u1^3]#2", "pi_tilde[u1^3]", "sigma1[u1^3]#2", "sigma2[u1^3]#2", "Theta3[u1^3]#3"] {
        assert!(aux.contains(&name), "missing {name} in {aux:?}");
    }
    let cons = labels(&prog);
    for name in [
        "square_lower[u1^3]#2",
        "product_lower1[u1^3]#3",
        "product_lower2[u1^3]#3",
        "product_lower3[u1^3]#3",
        "product_lower4[u1^3]#3",
    ] {
        assert!(cons.iter().any(|c| c == name), "missing {name} in {cons:?}");
    }
    assert!(!cons.iter().any(|c| c.starts_with("sign_upper")));

    // The implied bound holds at samples of the region.
    let sol = prog.solve(&InteriorPoint::default(), &Tolerances::default()).unwrap();
    let w = sol.instantiate(&cc.stand_ins[&alpha]);
    for x in samples_of(&p1("1 - x1^2"), &cube(1, 1.0), 1000, 2) {
        let mu = 1.0 + x[0];
        assert!(w.eval(&x) >= mu.powi(3) - 1e-6, "at {x:?}");
    }
}

#[test]
fn cascade_indefinite_cube_adds_sign_side() {
    let plant = identity_plant(1);
    let exp = expand_in_policy(&ParamPolynomial::from_poly(&p1("-x1^3")), &plant.f, &plant.g).unwrap();
    let region = ParamPolynomial::from_poly(&p1("1 - x1^2"));
    let mu = [ParamPolynomial::from_poly(&p1("1 + x1"))];
    let mut prog = SosProgram::new();
    let cc = build_cascade_constraints(&mut prog, &region, &exp, &mu, &[1], &BTreeMap::new(), &cascade_degrees(), &[0])
        .unwrap();
    assert!(cc.aux.contains_key("sigma_tilde1[u1^3]"));
    assert!(labels(&prog).iter().any(|c| c == "sign_upper[u1^3]"));
}

#[test]
fn cascade_for_mixed_cubic_pairs_square_first() {
    // h(x + u) = -(x1 + u1)^2 (x2 + u2) has a_(2,1) = -1.
    let plant = identity_plant(2);
    let exp = expand_in_policy(&ParamPolynomial::from_poly(&p2("-x1^2*x2")), &plant.f, &plant.g).unwrap();
    let alpha = InputIndex::from_exponents(&[2, 1]);
    assert_eq!(exp.a().filter(|(k, _)| k.degree() >= 3).count(), 1);
    let region_poly = p2("1 - x1^2 - x2^2");
    let region = ParamPolynomial::from_poly(&region_poly);
    let mu = [ParamPolynomial::from_poly(&p2("1 + x1")), ParamPolynomial::from_poly(&p2("1 + x2"))];
    let classes = BTreeMap::from([(alpha.clone(), SignClass::NonPositive)]);
    let mut prog = SosProgram::new();
    let cc = build_cascade_constraints(&mut prog, &region, &exp, &mu, &[1, 1], &classes, &cascade_degrees(), &[0, 1])
        .unwrap();
    let cons = labels(&prog);
    assert!(cons.iter().any(|c| c == "square_lower[u1^2u2]#2"), "{cons:?}");
    assert!(cons.iter().any(|c| c == "product_lower4[u1^2u2]#3"), "{cons:?}");

    let sol = prog.solve(&InteriorPoint::default(), &Tolerances::default()).unwrap();
    let w = sol.instantiate(&cc.stand_ins[&alpha]);
    let square = sol.instantiate(&cc.aux["mu_tilde[u1^2u2]#2"]);
    for x in samples_of(&region_poly, &cube(2, 1.0), 1000, 3) {
        let (m1, m2) = (1.0 + x[0], 1.0 + x[1]);
        assert!(square.eval(&x) >= m1 * m1 - 1e-6);
        assert!(w.eval(&x) >= m1 * m1 * m2 - 1e-6, "at {x:?}");
    }
}

#[test]
fn cascade_leaves_bilinear_terms_alone() {
    let plant = identity_plant(2);
    let exp = expand_in_policy(&ParamPolynomial::from_poly(&p2("-x1*x2")), &plant.f, &plant.g).unwrap();
    let mu = [ParamPolynomial::from_poly(&p2("1")), ParamPolynomial::from_poly(&p2("1"))];
    let mut prog = SosProgram::new();
    let region = ParamPolynomial::from_poly(&p2("1 - x1^2 - x2^2"));
    let cc = build_cascade_constraints(&mut prog, &region, &exp, &mu, &[0, 0], &BTreeMap::new(), &Degrees::default(), &[0, 1])
        .unwrap();
    assert!(cc.stand_ins.is_empty());
    assert!(cc.aux.is_empty());
    assert!(prog.constraints().is_empty());
}

#[test]
fn no_room_to_grow_when_safe_set_is_the_current_set() {
    let plant = scalar_plant("0.5*x1");
    let cfg = scalar_config("1 - x1^2", 1);
    let h = cfg.h0.clone();
    let safe = SafeSet::new(h.clone());
    let s1 = solve_step1(&build_step1(&h, &plant, &unit_input(), &cfg).unwrap(), &cfg, 1).unwrap();
    let (omega, _) = find_omega(&h, &plant, &s1.pi, s1.gamma0, &cfg, 1).unwrap();
    let inp = Step2Input {
        h_prev: &h,
        gamma0: s1.gamma0,
        pi: &s1.pi,
        omega: &omega,
        psi: &s1.psi,
        reimpose: Some(&s1),
        release: false,
    };
    let p2 = build_step2(&inp, &plant, &unit_input(), &safe, &cfg).unwrap();
    match solve_step2(&p2, &cfg, 1).unwrap() {
        Step2Outcome::Stalled { delta } => assert!(delta <= -cfg.epsilon + 1e-6, "delta = {delta}"),
        other => panic!("expected no room, got {other:?}"),
    }
    // With the margin fixed at delta the program is infeasible.
    let mut fixed = p2.prog.clone();
    fixed.add_linear_eq(&dtcbf::poly::AffineExpr::var(p2.delta) - &dtcbf::poly::AffineExpr::constant(cfg.delta));
    fixed.set_objective(dtcbf::sosir::Objective::Feasibility);
    assert!(fixed.solve(&InteriorPoint::default(), &cfg.tolerances).is_err());

    let res = run(&plant, &unit_input(), &safe, &cfg).unwrap();
    assert_eq!(res.termination, Termination::Stalled);
    assert_eq!(res.history.len(), 1);
}

#[test]
fn zero_iterations_return_initial_barrier() {
    let plant = scalar_plant("0.5*x1");
    let mut cfg = scalar_config("1 - x1^2", 1);
    cfg.max_iters = 0;
    let res = run(&plant, &unit_input(), &SafeSet::new(p1("4 - x1^2")), &cfg).unwrap();
    assert_eq!(res.triple.h, cfg.h0);
    assert!(res.logs.is_empty());
    assert_eq!(res.termination, Termination::NotRun);
    assert!(!res.certified);
}

#[test]
fn invalid_configurations_are_reported() {
    let plant = scalar_plant("0.5*x1");
    let safe = SafeSet::new(p1("4 - x1^2"));
    let mut cfg = scalar_config("1 - x1^2", 1);
    cfg.h_basis = Monomial::all_up_to(&[0], 0, 3);
    assert!(matches!(run(&plant, &unit_input(), &safe, &cfg), Err(SynthError::Config(_))));
    let mut cfg = scalar_config("1 - x1^2", 1);
    cfg.gamma = dtcbf::synth::GammaObjective::Target(1.5);
    assert!(matches!(run(&plant, &unit_input(), &safe, &cfg), Err(SynthError::Config(_))));
    let mut cfg = scalar_config("1 - x1^2", 1);
    cfg.pi_bases.push(vec![Monomial::one()]);
    assert!(matches!(run(&plant, &unit_input(), &safe, &cfg), Err(SynthError::Config(_))));
}

#[test]
fn unstable_plant_with_tiny_input_fails_initially() {
    let plant = scalar_plant("2*x1");
    let input = InputPolytope::from_box(&[-0.1], &[0.1]).unwrap();
    let cfg = scalar_config("1 - x1^2", 1);
    let err = run(&plant, &input, &SafeSet::new(p1("4 - x1^2")), &cfg).unwrap_err();
    match err {
        SynthError::Step1Infeasible { k, guidance } => {
            assert_eq!(k, 1);
            assert!(guidance.contains("h0"), "{guidance}");
        }
        other => panic!("expected Step1Infeasible, got {other}"),
    }
}

/// Full scalar run: enlargement at samples of every previous set, product
/// bounds after every Step 1, and the final triple verified.
#[test]
fn scalar_run_enlarges_and_respects_product_bounds() {
    let plant = scalar_plant("0.5*x1");
    let safe = SafeSet::new(p1("4 - x1^2"));
    let cfg = scalar_config("1 - x1^2", 1);
    let res = run(&plant, &unit_input(), &safe, &cfg).unwrap();
    assert!(res.certified);
    assert!(res.history.len() >= 2);
    for w in res.history.windows(2) {
        for x in samples_of(&w[0], &cube(1, 2.5), 1000, 4) {
            assert!(w[1].eval(&x) >= cfg.delta - 1e-6);
        }
    }
    for up in &res.updates {
        let exp = expand_in_policy(&ParamPolynomial::from_poly(&up.h_prev), &plant.f, &plant.g).unwrap();
        for (alpha, a) in exp.a() {
            let a = a.as_constant().unwrap();
            let Some(w) = up.stand_ins.get(alpha) else {
                assert_eq!(up.classes[alpha], SignClass::Zero);
                continue;
            };
            for x in samples_of(&up.h_prev, &cube(1, 2.5), 1000, 5) {
                let gap = a.eval(&x) * (policy_power(&up.pi, alpha).eval(&x) - w.eval(&x));
                assert!(gap >= -1e-6, "k={} gap {gap} at {x:?}", up.k);
            }
        }
    }
    let mut spec = SamplingSpec::new(vec![(-3.0, 3.0)]);
    spec.samples = 10_000;
    let report = check_triple(&res.triple, &plant, &unit_input(), &safe, &spec).unwrap();
    assert!(report.passes(), "{report:?}");
    let areas: Vec<f64> = res.logs.iter().filter_map(|l| l.area).collect();
    assert!(areas.windows(2).all(|w| w[1] >= w[0] - 1e-2));
}

#[test]
fn runs_are_deterministic() {
    let plant = scalar_plant("0.5*x1");
    let safe = SafeSet::new(p1("4 - x1^2"));
    let cfg = scalar_config("1 - x1^2", 1);
    let a = run(&plant, &unit_input(), &safe, &cfg).unwrap();
    let b = run(&plant, &unit_input(), &safe, &cfg).unwrap();
    assert_eq!(a.triple.h, b.triple.h);
    assert_eq!(a.history, b.history);
}

#[test]
fn fixed_policy_with_zero_input_does_not_improve() {
    let plant = scalar_plant("0.5*x1");
    let safe = SafeSet::new(p1("4 - x1^2"));
    let zero = InputPolytope::from_box(&[0.0], &[0.0]).unwrap();
    let mut cfg = scalar_config("1 - x1^2", 1);
    let quadratic = run(&plant, &zero, &safe, &cfg).unwrap();
    assert!(quadratic.certified);
    cfg.h_basis = Monomial::all_up_to(&[0], 0, 4);
    cfg.extension = Extension::FixedPolicy;
    let res = run_fixed_policy(&plant, &zero, &safe, &cfg, &quadratic).unwrap();
    assert!(res.no_improvement);
    assert_eq!(res.termination, Termination::NoImprovement);
    assert_eq!(res.triple.h, quadratic.triple.h);
}

#[test]
fn fixed_policy_without_new_monomials_keeps_a_certified_triple() {
    let plant = scalar_plant("0.5*x1");
    let safe = SafeSet::new(p1("4 - x1^2"));
    let cfg = scalar_config("1 - x1^2", 1);
    let quadratic = run(&plant, &unit_input(), &safe, &cfg).unwrap();
    let res = run_fixed_policy(&plant, &unit_input(), &safe, &cfg, &quadratic).unwrap();
    assert!(res.certified);
    assert_eq!(res.triple.gamma0, quadratic.triple.gamma0);
    assert_eq!(res.triple.pi, quadratic.triple.pi);
    let mut spec = SamplingSpec::new(vec![(-3.0, 3.0)]);
    spec.samples = 10_000;
    assert!(check_triple(&res.triple, &plant, &unit_input(), &safe, &spec).unwrap().passes());
}
