use dtcbf::poly::Monomial;
use dtcbf::sdp::{
    read_sdpa, solve, write_sdpa, Column, EchoBackend, InteriorPoint, SdpBackend, SdpProblem,
    Solution, SolverSettings, Status,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn psd_entries(block: usize, n: usize, m: &DMatrix<f64>) -> Vec<(Column, f64)> {
    let mut out = Vec::new();
    for p in 0..n {
        for q in p..n {
            let f = if p == q { 1.0 } else { 2.0 };
            if m[(p, q)] != 0.0 {
                out.push((Column::Psd { block, row: p, col: q }, f * m[(p, q)]));
            }
        }
    }
    out
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    a.qr().q()
}

/// A problem with a known optimum: complementary `(X*, S*)`, random `A`,
/// `y*`, and `b = A(X*)`, `C = S* + A'(y*)`.
struct Constructed {
    problem: SdpProblem,
    optimum: f64,
}

fn constructed(seed: u64) -> Constructed {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = [3usize, 4];
    let n_nonneg = 3;
    let n_free = 2;
    let m = 10;
    let mut xs = Vec::new();
    let mut ss = Vec::new();
    for &n in &sizes {
        let q = random_orthogonal(n, &mut rng);
        let r = n / 2;
        let mut dx = DMatrix::zeros(n, n);
        let mut ds = DMatrix::zeros(n, n);
        for i in 0..n {
            if i < r {
                dx[(i, i)] = rng.gen_range(0.5..2.0);
            } else {
                ds[(i, i)] = rng.gen_range(0.5..2.0);
            }
        }
        xs.push(&q * dx * q.transpose());
        ss.push(&q * ds * q.transpose());
    }
    let xl: Vec<f64> = (0..n_nonneg).map(|i| if i % 2 == 0 { rng.gen_range(0.5..2.0) } else { 0.0 }).collect();
    let sl: Vec<f64> = (0..n_nonneg).map(|i| if i % 2 == 1 { rng.gen_range(0.5..2.0) } else { 0.0 }).collect();
    let xf: Vec<f64> = (0..n_free).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut p = SdpProblem::new();
    p.add_free(n_free);
    p.add_nonneg(n_nonneg);
    for &n in &sizes {
        p.add_psd(n);
    }
    let mut c_free = vec![0.0; n_free];
    let mut c_lp = sl.clone();
    let mut c_psd = ss.clone();
    for i in 0..m {
        let mut entries = Vec::new();
        let mut rhs = 0.0;
        for (j, &v) in xf.iter().enumerate() {
            let a = rng.gen_range(-1.0..1.0);
            entries.push((Column::Free(j), a));
            rhs += a * v;
            c_free[j] += a * y[i];
        }
        for (j, &v) in xl.iter().enumerate() {
            let a = rng.gen_range(-1.0..1.0);
            entries.push((Column::NonNeg(j), a));
            rhs += a * v;
            c_lp[j] += a * y[i];
        }
        for (k, &n) in sizes.iter().enumerate() {
            let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            a = (&a + a.transpose()) * 0.5;
            entries.extend(psd_entries(k, n, &a));
            rhs += a.dot(&xs[k]);
            c_psd[k] += &a * y[i];
        }
        p.add_row(entries, rhs);
    }
    let mut obj = Vec::new();
    for j in 0..n_free {
        obj.push((Column::Free(j), c_free[j]));
    }
    for j in 0..n_nonneg {
        obj.push((Column::NonNeg(j), c_lp[j]));
    }
    for (k, &n) in sizes.iter().enumerate() {
        obj.extend(psd_entries(k, n, &c_psd[k]));
    }
    p.objective = obj;
    let optimum: f64 = p.rows.iter().zip(&y).map(|(r, y)| r.rhs * y).sum();
    Constructed { problem: p, optimum }
}

fn check_optimal(sol: &Solution, p: &SdpProblem) {
    assert_eq!(sol.status, Status::Optimal, "status {:?}", sol.status);
    let bmax = p.rows.iter().fold(0.0f64, |a, r| a.max(r.rhs.abs()));
    assert!(sol.residuals.primal <= 1e-6 * (1.0 + bmax), "{:?}", sol.residuals);
    assert!(sol.residuals.primal_cone >= -1e-7, "{:?}", sol.residuals);
}

#[test]
fn one_by_one_block() {
    let mut p = SdpProblem::new();
    p.add_psd(1);
    p.add_row(vec![(Column::Psd { block: 0, row: 0, col: 0 }, 1.0)], 2.0);
    let sol = solve(&p, &SolverSettings::default()).unwrap();
    check_optimal(&sol, &p);
    assert!((sol.x_psd[0][(0, 0)] - 2.0).abs() < 1e-8);
}

#[test]
fn constructed_suite_recovers_objective() {
    for seed in 0..5 {
        let c = constructed(seed);
        let sol = solve(&c.problem, &SolverSettings::default()).unwrap();
        check_optimal(&sol, &c.problem);
        assert!(
            (sol.primal_objective - c.optimum).abs() <= 1e-6 * (1.0 + c.optimum.abs()),
            "seed {seed}: {} vs {}",
            sol.primal_objective,
            c.optimum
        );
        let backend = InteriorPoint::default();
        let again = backend.submit(&c.problem).unwrap();
        assert!((again.primal_objective - c.optimum).abs() <= 1e-6 * (1.0 + c.optimum.abs()));
    }
}

#[test]
fn deterministic() {
    let c = constructed(7);
    let a = solve(&c.problem, &SolverSettings::default()).unwrap();
    let b = solve(&c.problem, &SolverSettings::default()).unwrap();
    assert_eq!(a.status, b.status);
    assert!((a.primal_objective - b.primal_objective).abs() <= 1e-10);
}

#[test]
fn row_scaling_keeps_status() {
    for seed in 0..3 {
        let mut c = constructed(seed);
        for (i, r) in c.problem.rows.iter_mut().enumerate() {
            if i % 2 == 0 {
                r.rhs *= 1e3;
                for e in &mut r.entries {
                    e.1 *= 1e3;
                }
            }
        }
        let sol = solve(&c.problem, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.primal_objective - c.optimum).abs() <= 1e-6 * (1.0 + c.optimum.abs()));
    }
}

/// Gram feasibility program `p = z' Q z`, `Q >= 0` for a polynomial in two
/// variables given as (exponents, coefficient) pairs.
fn gram_program(poly: &[([u32; 2], f64)], half: u32) -> (SdpProblem, Vec<Monomial>) {
    let basis = Monomial::all_up_to(&[0, 1], 0, half);
    let n = basis.len();
    let mut rows: BTreeMap<Monomial, Vec<(Column, f64)>> = BTreeMap::new();
    for p in 0..n {
        for q in p..n {
            let mono = basis[p].mul(&basis[q]);
            let f = if p == q { 1.0 } else { 2.0 };
            rows.entry(mono).or_default().push((Column::Psd { block: 0, row: p, col: q }, f));
        }
    }
    let target: BTreeMap<Monomial, f64> = poly
        .iter()
        .map(|(e, c)| (Monomial::from_exponents(e), *c))
        .collect();
    let mut prob = SdpProblem::new();
    prob.add_psd(n);
    let mut monos = Vec::new();
    for (mono, entries) in rows {
        let rhs = target.get(&mono).copied().unwrap_or(0.0);
        prob.add_row(entries, rhs);
        monos.push(mono);
    }
    (prob, monos)
}

#[test]
fn motzkin_is_not_sos() {
    let motzkin = [([4, 2], 1.0), ([2, 4], 1.0), ([2, 2], -3.0), ([0, 0], 1.0)];
    let (p, monos) = gram_program(&motzkin, 3);
    let sol = solve(&p, &SolverSettings::default()).unwrap();
    assert_eq!(sol.status, Status::Infeasible);
    // y is a linear functional L on coefficients with L(motzkin) = 1 > 0
    // and L(q^2) <= 0 for every q in the span of the Gram basis.
    let lm: f64 = monos
        .iter()
        .zip(&sol.y)
        .map(|(m, y)| {
            motzkin
                .iter()
                .filter(|(e, _)| Monomial::from_exponents(e) == *m)
                .map(|(_, c)| c * y)
                .sum::<f64>()
        })
        .sum();
    assert!((lm - 1.0).abs() < 1e-6);
    let basis = Monomial::all_up_to(&[0, 1], 0, 3);
    let n = basis.len();
    let index: BTreeMap<&Monomial, usize> = monos.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let moment = DMatrix::from_fn(n, n, |i, j| sol.y[index[&basis[i].mul(&basis[j])]]);
    let eig = moment.symmetric_eigen().eigenvalues.max();
    assert!(eig <= 1e-6, "largest eigenvalue {eig}");
}

#[test]
fn sos_polynomial_is_feasible() {
    // (x^2 + y - 1)^2 + (x y)^2
    let poly = [
        ([4, 0], 1.0),
        ([2, 1], 2.0),
        ([2, 0], -2.0),
        ([0, 2], 1.0),
        ([0, 1], -2.0),
        ([0, 0], 1.0),
        ([2, 2], 1.0),
    ];
    let (p, _) = gram_program(&poly, 2);
    let sol = solve(&p, &SolverSettings::default()).unwrap();
    check_optimal(&sol, &p);
}

#[test]
fn infeasible_free_rows_detected_in_presolve() {
    let mut p = SdpProblem::new();
    p.add_free(1);
    p.add_row(vec![(Column::Free(0), 1.0)], 1.0);
    p.add_row(vec![(Column::Free(0), 2.0)], 3.0);
    let sol = solve(&p, &SolverSettings::default()).unwrap();
    assert_eq!(sol.status, Status::Infeasible);
    let by: f64 = sol.y[0] * 1.0 + sol.y[1] * 3.0;
    assert!((by - 1.0).abs() < 1e-9);
    assert!((sol.y[0] + 2.0 * sol.y[1]).abs() < 1e-9);
}

#[test]
fn unbounded_detected() {
    // min -x s.t. x - X = 0, X >= 0
    let mut p = SdpProblem::new();
    p.add_nonneg(1);
    p.add_psd(1);
    p.add_row(
        vec![(Column::NonNeg(0), 1.0), (Column::Psd { block: 0, row: 0, col: 0 }, -1.0)],
        0.0,
    );
    p.objective = vec![(Column::NonNeg(0), -1.0)];
    let sol = solve(&p, &SolverSettings::default()).unwrap();
    assert_eq!(sol.status, Status::Unbounded);
}

#[test]
fn sdpa_round_trip() {
    let mut c = constructed(3);
    // free variables come back as split non-negative pairs, so compare a
    // free-less problem structurally and the full one by objective
    let full = c.problem.clone();
    let text = write_sdpa(&full);
    let back = read_sdpa(&text).unwrap();
    assert_eq!(back.n_nonneg, full.n_nonneg + 2 * full.n_free);
    let a = solve(&full, &SolverSettings::default()).unwrap();
    let b = solve(&back, &SolverSettings::default()).unwrap();
    assert_eq!(b.status, Status::Optimal);
    assert!((a.primal_objective - b.primal_objective).abs() <= 1e-6 * (1.0 + a.primal_objective.abs()));

    c.problem.n_free = 0;
    for r in &mut c.problem.rows {
        r.entries.retain(|e| !matches!(e.0, Column::Free(_)));
    }
    c.problem.objective.retain(|e| !matches!(e.0, Column::Free(_)));
    let text = write_sdpa(&c.problem);
    let back = read_sdpa(&text).unwrap();
    assert_eq!(back.psd_sizes, c.problem.psd_sizes);
    let x = solve(&c.problem, &SolverSettings::default()).unwrap();
    let y = solve(&back, &SolverSettings::default()).unwrap();
    assert_eq!(x.status, y.status);
    assert!((x.primal_objective - y.primal_objective).abs() <= 1e-6 * (1.0 + x.primal_objective.abs()));
}

#[test]
fn sdpa_errors_carry_line() {
    let err = read_sdpa("1\n1\n2\n1.0\n1 1 1 x 2\n").unwrap_err();
    assert!(matches!(err, dtcbf::sdp::SdpError::Format { line: 5, .. }), "{err:?}");
}

#[test]
fn echo_backend_returns_canned_solution() {
    let mut p = SdpProblem::new();
    p.add_psd(1);
    p.add_row(vec![(Column::Psd { block: 0, row: 0, col: 0 }, 1.0)], 2.0);
    let mut canned = Solution::zeros(&p, Status::Optimal);
    canned.x_psd[0][(0, 0)] = 2.0;
    let sol = EchoBackend::new(canned).submit(&p).unwrap();
    assert_eq!(sol.residuals.primal, 0.0);
    let mut other = SdpProblem::new();
    other.add_psd(2);
    assert!(EchoBackend::new(sol).submit(&other).is_err());
}
