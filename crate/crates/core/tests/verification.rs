use std::collections::BTreeMap;

use dtcbf::poly::{parse_polynomial, Monomial, PolyMatrix, Polynomial, VarNames};
use dtcbf::sosir::{Certificate, Tolerances};
use dtcbf::synth::{DtcbfTriple, InputPolytope, PlantModel, SafeSet};
use dtcbf::verify::{
    check_certificates, check_triple, levelset_sample, point_values, sample_superlevel_set, simulate,
    summarize_certificates, Plane, SamplingSpec, VerifyError,
};

fn p1(t: &str) -> Polynomial {
    parse_polynomial(t, &VarNames::new(1, 1)).unwrap()
}

fn p2(t: &str) -> Polynomial {
    parse_polynomial(t, &VarNames::new(2, 0)).unwrap()
}

fn scalar_plant() -> PlantModel {
    PlantModel::new(vec![p1("0.5*x1")], PolyMatrix::from_rows(vec![vec![p1("1")]]).unwrap()).unwrap()
}

fn triple(h: Polynomial, gamma0: f64, pi: Vec<Polynomial>) -> DtcbfTriple {
    DtcbfTriple {
        h,
        gamma0,
        pi,
        certificates: Vec::new(),
        multipliers: BTreeMap::new(),
    }
}

/// `h = 1 - x^2`, `pi = 0`, `gamma0 = 0.75` on `x+ = 0.5 x + u`, `|u| <= 1`,
/// `S = {4 - x^2 >= 0}`: every condition holds by hand.
fn scalar_case() -> (DtcbfTriple, PlantModel, InputPolytope, SafeSet) {
    (
        triple(p1("1 - x1^2"), 0.75, vec![Polynomial::zero()]),
        scalar_plant(),
        InputPolytope::from_box(&[-1.0], &[1.0]).unwrap(),
        SafeSet::new(p1("4 - x1^2")),
    )
}

fn spec(bounds: Vec<(f64, f64)>, samples: usize) -> SamplingSpec {
    let mut s = SamplingSpec::new(bounds);
    s.samples = samples;
    s
}

#[test]
fn hand_checked_triple_passes() {
    let (t, plant, input, safe) = scalar_case();
    let report = check_triple(&t, &plant, &input, &safe, &spec(vec![(-3.0, 3.0)], 20_000)).unwrap();
    assert!(report.passes(), "{report:?}");
    assert_eq!(report.max_violation(), 0.0);
    assert_eq!(report.decrease.samples, 20_000);
    assert!(report.warnings.is_empty());
}

#[test]
fn empty_superlevel_set_passes_with_warning() {
    let (_, plant, input, safe) = scalar_case();
    let t = triple(p1("-1"), 0.5, vec![Polynomial::zero()]);
    let report = check_triple(&t, &plant, &input, &safe, &spec(vec![(-3.0, 3.0)], 1000)).unwrap();
    assert!(report.passes());
    assert_eq!(report.decrease.samples, 0);
    assert!(report.warnings.iter().any(|w| w.contains("empty")), "{:?}", report.warnings);
}

#[test]
fn perturbed_policy_violates_admissibility() {
    let (mut t, plant, input, safe) = scalar_case();
    t.pi[0] = &t.pi[0] + &Polynomial::constant(10.0);
    let report = check_triple(&t, &plant, &input, &safe, &spec(vec![(-3.0, 3.0)], 5000)).unwrap();
    assert!(!report.passes());
    assert!((report.admissibility.max_violation - 9.0).abs() < 1e-9);
    // The worst point reproduces the reported violation.
    let x = report.admissibility.worst_point.clone().unwrap();
    let v = point_values(&t, &plant, &input, &safe, &x);
    assert_eq!(-v.min_slack, report.admissibility.max_violation);
    assert!(t.h.eval(&x) >= 0.0);
}

#[test]
fn worst_decrease_point_is_reproducible() {
    let (mut t, plant, input, safe) = scalar_case();
    t.gamma0 = 0.1;
    t.pi[0] = p1("0.9");
    let report = check_triple(&t, &plant, &input, &safe, &spec(vec![(-3.0, 3.0)], 5000)).unwrap();
    assert!(report.decrease.max_violation > 0.0);
    let x = report.decrease.worst_point.clone().unwrap();
    let v = point_values(&t, &plant, &input, &safe, &x);
    assert_eq!(-v.decrease, report.decrease.max_violation);
}

#[test]
fn barrier_reaching_outside_safe_set_is_caught() {
    let (mut t, plant, input, _) = scalar_case();
    t.h = p1("9 - x1^2");
    let safe = SafeSet::new(p1("4 - x1^2"));
    let report = check_triple(&t, &plant, &input, &safe, &spec(vec![(-4.0, 4.0)], 5000)).unwrap();
    assert!(report.containment.max_violation > 0.0);
    assert!(report.exclusion.max_violation > 0.0);
    assert!(!report.passes());
}

#[test]
fn gamma_outside_unit_interval_fails() {
    let (mut t, plant, input, safe) = scalar_case();
    t.gamma0 = 1.5;
    let report = check_triple(&t, &plant, &input, &safe, &spec(vec![(-3.0, 3.0)], 100)).unwrap();
    assert!(!report.gamma0_in_range);
    assert!(!report.passes());
}

#[test]
fn malformed_inputs_are_errors() {
    let (t, plant, input, safe) = scalar_case();
    assert!(matches!(
        check_triple(&t, &plant, &input, &safe, &spec(vec![(1.0, 1.0)], 10)),
        Err(VerifyError::DegenerateBounds(_))
    ));
    assert!(matches!(
        check_triple(&t, &plant, &input, &safe, &spec(vec![(0.0, 1.0), (0.0, 1.0)], 10)),
        Err(VerifyError::Shape(_))
    ));
    let wide = triple(p1("1 - x1^2"), 0.5, vec![Polynomial::zero(), Polynomial::zero()]);
    assert!(matches!(
        check_triple(&wide, &plant, &input, &safe, &spec(vec![(0.0, 1.0)], 10)),
        Err(VerifyError::Shape(_))
    ));
}

#[test]
fn doubling_samples_never_lowers_the_violation() {
    let (mut t, plant, input, safe) = scalar_case();
    t.gamma0 = 0.2;
    t.pi[0] = p1("0.8 + 0.1*x1");
    let mut last = f64::NEG_INFINITY;
    for n in [100, 200, 400, 800, 1600, 3200] {
        let r = check_triple(&t, &plant, &input, &safe, &spec(vec![(-3.0, 3.0)], n)).unwrap();
        assert!(r.max_violation() >= last);
        last = r.max_violation();
    }
    let a = check_triple(&t, &plant, &input, &safe, &spec(vec![(-3.0, 3.0)], 500)).unwrap();
    let b = check_triple(&t, &plant, &input, &safe, &spec(vec![(-3.0, 3.0)], 500)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn stable_plant_trajectories_contract() {
    let (t, plant, _, safe) = scalar_case();
    let x0s = sample_superlevel_set(&t.h, &spec(vec![(-3.0, 3.0)], 0), 1000);
    assert_eq!(x0s.len(), 1000);
    let sim = simulate(&t, &plant, &safe, &x0s, 50, 1e-6);
    assert_eq!(sim.summary.violating, 0);
    assert_eq!(sim.summary.trajectories, 1000);
    for tr in &sim.trajectories {
        assert_eq!(tr.states.len(), 51);
        assert!(tr.states.windows(2).all(|w| w[1][0].abs() <= w[0][0].abs()));
    }
}

#[test]
fn boundary_start_stays_inside() {
    let (t, plant, _, safe) = scalar_case();
    assert_eq!(t.h.eval(&[1.0]), 0.0);
    let sim = simulate(&t, &plant, &safe, &[vec![1.0], vec![-1.0]], 30, 0.0);
    assert_eq!(sim.summary.violating, 0);
    assert!(sim.summary.min_h >= 0.0);
}

#[test]
fn zero_steps_only_check_the_start() {
    let (t, plant, _, safe) = scalar_case();
    let sim = simulate(&t, &plant, &safe, &[vec![0.3]], 0, 1e-6);
    assert_eq!(sim.summary.violating, 0);
    assert_eq!(sim.trajectories[0].states, vec![vec![0.3]]);
}

#[test]
fn escaping_trajectory_is_flagged() {
    let (mut t, plant, _, safe) = scalar_case();
    t.pi[0] = p1("x1");
    let sim = simulate(&t, &plant, &safe, &[vec![0.9]], 10, 1e-6);
    assert_eq!(sim.summary.violating, 1);
    assert_eq!(sim.trajectories[0].first_violation, Some(1));
}

#[test]
fn consistent_checks_imply_safe_simulation() {
    let (t, plant, input, safe) = scalar_case();
    let s = spec(vec![(-3.0, 3.0)], 2000);
    let report = check_triple(&t, &plant, &input, &safe, &s).unwrap();
    assert!(report.max_violation() <= s.tol);
    let x0s = sample_superlevel_set(&t.h, &s, s.samples);
    assert_eq!(simulate(&t, &plant, &safe, &x0s, 20, s.tol).summary.violating, 0);
}

fn certificate(gram: Vec<Vec<f64>>, entry: Polynomial) -> Certificate {
    Certificate {
        label: "test".into(),
        bases: vec![vec![Monomial::one(), Monomial::var(0)]],
        gram,
        entries: vec![vec![entry]],
    }
}

#[test]
fn valid_certificate_passes() {
    let mut t = scalar_case().0;
    // (1 + x)^2 = [1 x] [[1, 1], [1, 1]] [1 x]'
    t.certificates.push(certificate(vec![vec![1.0, 1.0], vec![1.0, 1.0]], p1("1 + 2*x1 + x1^2")));
    let r = check_certificates(&t, &Tolerances::default()).unwrap();
    assert_eq!(r.checked, 1);
    assert!(r.max_residual < 1e-12);
}

#[test]
fn zeroed_gram_fails_reconstruction() {
    let mut t = scalar_case().0;
    t.certificates.push(certificate(vec![vec![0.0; 2]; 2], p1("1 + x1^2")));
    let err = check_certificates(&t, &Tolerances::default()).unwrap_err();
    assert_eq!(err, VerifyError::CertificateResidual(vec!["test".into()]));
    let r = summarize_certificates(&t, &Tolerances::default());
    assert!((r.max_residual - 1.0).abs() < 1e-12);
}

#[test]
fn negative_eigenvalue_depends_on_tolerance() {
    let mut t = scalar_case().0;
    t.certificates.push(certificate(vec![vec![1.0, 0.0], vec![0.0, -1e-5]], p1("1 - 0.00001*x1^2")));
    let strict = Tolerances {
        eig_tol: 1e-7,
        coeff_tol: 1e-6,
    };
    let loose = Tolerances {
        eig_tol: 1e-4,
        coeff_tol: 1e-6,
    };
    assert!(check_certificates(&t, &strict).is_err());
    let r = check_certificates(&t, &loose).unwrap();
    assert!((r.min_eigenvalue + 1e-5).abs() < 1e-12);
}

#[test]
fn circle_level_set() {
    let h = p2("0.1 - x1^2 - x2^2");
    let plane = Plane::through_origin(2, 0, 1).unwrap();
    let ls = levelset_sample(&h, &plane, [(-0.5, 0.5), (-0.5, 0.5)], 201).unwrap();
    assert_eq!(ls.grid.len(), 201 * 201);
    assert!(!ls.boundary.is_empty());
    let r = 0.1f64.sqrt();
    for b in &ls.boundary {
        assert!(((b[0] * b[0] + b[1] * b[1]).sqrt() - r).abs() < 1e-3, "{b:?}");
    }
    let frac = ls.positive_fraction();
    let expect = std::f64::consts::PI * 0.1;
    assert!((frac - expect).abs() < 0.02, "{frac} vs {expect}");
    let csv = ls.grid_csv();
    assert!(csv.starts_with("x1,x2,h\n"));
    assert_eq!(csv.lines().count(), 201 * 201 + 1);
}

#[test]
fn constant_positive_level_set_has_no_boundary() {
    let plane = Plane::through_origin(2, 0, 1).unwrap();
    let ls = levelset_sample(&p2("1"), &plane, [(-1.0, 1.0), (-1.0, 1.0)], 11).unwrap();
    assert!(ls.boundary.is_empty());
    assert_eq!(ls.positive_fraction(), 1.0);
    assert!(ls.grid.iter().all(|g| g[2] > 0.0));
}

#[test]
fn plane_slices_through_base_point() {
    // h = 1 - x3^2 - x4^2 - x1 on the (x3, x4) plane with x1 = 0.5.
    let h = parse_polynomial("1 - x3^2 - x4^2 - x1", &VarNames::new(4, 0)).unwrap();
    let plane = Plane {
        axes: (2, 3),
        base: vec![0.5, 0.0, 0.0, 0.0],
    };
    let ls = levelset_sample(&h, &plane, [(-1.0, 1.0), (-1.0, 1.0)], 101).unwrap();
    for b in &ls.boundary {
        assert!(((b[0] * b[0] + b[1] * b[1]).sqrt() - 0.5f64.sqrt()).abs() < 2e-3);
    }
}

#[test]
fn level_set_errors() {
    assert!(matches!(Plane::through_origin(2, 1, 1), Err(VerifyError::UnknownPlane(_))));
    assert!(matches!(Plane::through_origin(2, 0, 2), Err(VerifyError::UnknownPlane(_))));
    let plane = Plane::through_origin(2, 0, 1).unwrap();
    let h = p2("1");
    assert!(matches!(
        levelset_sample(&h, &plane, [(1.0, 1.0), (0.0, 1.0)], 10),
        Err(VerifyError::DegenerateBounds(_))
    ));
    assert!(matches!(
        levelset_sample(&h, &plane, [(0.0, 1.0), (0.0, 1.0)], 1),
        Err(VerifyError::DegenerateBounds(_))
    ));
}
