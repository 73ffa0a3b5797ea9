//! The alternating loop and the two higher-degree extensions.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::poly::{InputIndex, Monomial, Polynomial, VarId};
use crate::sdp::InteriorPoint;
use crate::sosir::Certificate;

use super::area::{safe_set_box, AreaEstimator};
use super::problem::{restriction_map, shift_by, shift_input, InputPolytope, PlantModel, SafeSet};
use super::relax::{alpha_label, SignClass};
use super::steps::{build_step1, build_step2, find_omega, find_psi, solve_step1, solve_step2};
use super::steps::{Step1Result, Step2Input, Step2Outcome};
use super::{
    DtcbfTriple, Extension, InputShift, IterationLog, StepStatus, SynthError, SynthesisConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Step 2 solved but the margin stayed below `delta`.
    Stalled,
    Step2Infeasible,
    /// No decrease multiplier for the latest policy.
    OmegaInfeasible,
    MaxIters,
    /// The fixed-policy continuation could not enlarge the quadratic barrier.
    NoImprovement,
    /// `max_iters = 0`.
    NotRun,
}

/// One Step 1 solution, kept for inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyUpdate {
    pub k: usize,
    pub h_prev: Polynomial,
    pub gamma0: f64,
    /// The policy in the coordinates Step 1 used (shifted for the cascaded
    /// extension).
    pub pi: Vec<Polynomial>,
    pub stand_ins: BTreeMap<InputIndex, Polynomial>,
    pub classes: BTreeMap<InputIndex, SignClass>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisResult {
    pub triple: DtcbfTriple,
    /// False only when no iteration produced a certified triple.
    pub certified: bool,
    pub logs: Vec<IterationLog>,
    /// `h0` followed by every accepted barrier.
    pub history: Vec<Polynomial>,
    /// Margin `delta` achieved by each accepted barrier over the previous
    /// one.
    pub margins: Vec<f64>,
    pub updates: Vec<PolicyUpdate>,
    pub termination: Termination,
    pub no_improvement: bool,
    /// State variables kept by the subsystem reduction.
    pub states: Vec<VarId>,
    /// Input shift used by the cascaded extension.
    pub shift: Option<Vec<f64>>,
}

/// Synthesizes a triple, discarding iteration events.
pub fn run(
    plant: &PlantModel,
    input: &InputPolytope,
    safe: &SafeSet,
    cfg: &SynthesisConfig,
) -> Result<SynthesisResult, SynthError> {
    run_with_observer(plant, input, safe, cfg, &mut |_| {})
}

/// Synthesizes a triple, calling `observer` after every iteration.
pub fn run_with_observer(
    plant: &PlantModel,
    input: &InputPolytope,
    safe: &SafeSet,
    cfg: &SynthesisConfig,
    observer: &mut dyn FnMut(&IterationLog),
) -> Result<SynthesisResult, SynthError> {
    cfg.validate(plant)?;
    let keep: Vec<VarId> = if cfg.reduce_state {
        let seed: BTreeSet<VarId> = safe.s.vars().into_iter().chain(cfg.h0.vars()).collect();
        plant.closed_subsystem(&seed)
    } else {
        (0..plant.n as VarId).collect()
    };
    let map = restriction_map(plant.n, &keep);
    let rplant = plant.restrict(&keep);
    let rsafe = SafeSet::new(safe.s.remap(&map));
    let rcfg = restrict_config(cfg, &keep, &map);

    let mut out = if cfg.max_iters == 0 {
        not_run(&rcfg, plant.m)
    } else {
        let area = area_estimator(&rsafe, rplant.n, &rcfg);
        match cfg.extension {
            Extension::Quadratic => alternate(&rplant, input, &rsafe, &rcfg, area.as_ref(), observer)?,
            Extension::Cascaded => cascaded(&rplant, input, &rsafe, &rcfg, area.as_ref(), observer)?,
            Extension::FixedPolicy => {
                let mut qcfg = rcfg.clone();
                qcfg.h_basis.retain(|m| m.degree() <= 2);
                qcfg.extension = Extension::Quadratic;
                let warm = alternate(&rplant, input, &rsafe, &qcfg, area.as_ref(), observer)?;
                fixed_policy(&rplant, input, &rsafe, &rcfg, warm, area.as_ref(), observer)?
            }
        }
    };
    lift(&mut out, &keep);
    out.states = keep;
    Ok(out)
}

/// Continues a converged quadratic result with Step 2 alone, the policy and
/// `gamma0` fixed, over the configured (higher-degree) basis.
pub fn run_fixed_policy(
    plant: &PlantModel,
    input: &InputPolytope,
    safe: &SafeSet,
    cfg: &SynthesisConfig,
    quadratic: &SynthesisResult,
) -> Result<SynthesisResult, SynthError> {
    cfg.validate(plant)?;
    let area = area_estimator(safe, plant.n, cfg);
    fixed_policy(plant, input, safe, cfg, quadratic.clone(), area.as_ref(), &mut |_| {})
}

fn restrict_config(cfg: &SynthesisConfig, keep: &[VarId], map: &[VarId]) -> SynthesisConfig {
    let kept = |m: &Monomial| m.vars().all(|v| keep.contains(&v));
    let remap = |m: &Monomial| Monomial::from_pairs(m.pairs().iter().map(|&(v, e)| (map[v as usize], e)));
    let mut out = cfg.clone();
    out.h0 = cfg.h0.remap(map);
    out.h_basis = cfg.h_basis.iter().filter(|m| kept(m)).map(remap).collect();
    out.pi_bases = cfg
        .pi_bases
        .iter()
        .map(|b| b.iter().filter(|m| kept(m)).map(remap).collect())
        .collect();
    out
}

fn area_estimator(safe: &SafeSet, n: usize, cfg: &SynthesisConfig) -> Option<AreaEstimator> {
    let bounds = safe_set_box(safe, n, &InteriorPoint::new(cfg.solver.clone()), &cfg.tolerances)?;
    Some(AreaEstimator::new(safe, &bounds, cfg.area_samples, cfg.seed))
}

fn not_run(cfg: &SynthesisConfig, m: usize) -> SynthesisResult {
    SynthesisResult {
        triple: DtcbfTriple {
            h: cfg.h0.clone(),
            gamma0: 1.0,
            pi: vec![Polynomial::zero(); m],
            certificates: Vec::new(),
            multipliers: BTreeMap::new(),
        },
        certified: false,
        logs: Vec::new(),
        history: vec![cfg.h0.clone()],
        margins: Vec::new(),
        updates: Vec::new(),
        termination: Termination::NotRun,
        no_improvement: false,
        states: Vec::new(),
        shift: None,
    }
}

fn normalized(h: &Polynomial) -> Polynomial {
    let s = h.max_abs_coeff();
    if s > 0.0 {
        h.scale(1.0 / s)
    } else {
        h.clone()
    }
}

fn log_area(area: Option<&AreaEstimator>, h: &Polynomial, log: &mut IterationLog) {
    if let Some(a) = area {
        log.area_ratio = Some(a.ratio(h));
        log.area = Some(a.area(h));
    }
}

fn new_log(k: usize) -> IterationLog {
    IterationLog {
        k,
        step1: StepStatus::Skipped,
        step2: StepStatus::Skipped,
        gamma0: None,
        delta: None,
        area: None,
        area_ratio: None,
        step1_seconds: 0.0,
        step2_seconds: 0.0,
    }
}

fn with_labels<'a>(certs: &'a [Certificate], prefix: &'a str) -> impl Iterator<Item = Certificate> + 'a {
    certs.iter().filter(move |c| c.label.starts_with(prefix)).cloned()
}

/// The triple `(h_prev, gamma0, pi)` certified by Step 1 and `Omega`.
fn step1_triple(h_prev: &Polynomial, s1: &Step1Result, omega: &Polynomial, ocerts: &[Certificate]) -> DtcbfTriple {
    let mut multipliers = s1.aux.clone();
    multipliers.insert("Lambda".into(), s1.lambda.clone());
    multipliers.insert("Omega".into(), omega.clone());
    for (r, p) in s1.psi.iter().enumerate() {
        multipliers.insert(format!("Psi[{r}]"), p.clone());
    }
    let mut certificates: Vec<Certificate> = s1.certificates.clone();
    certificates.extend(ocerts.iter().cloned());
    DtcbfTriple {
        h: h_prev.clone(),
        gamma0: s1.gamma0,
        pi: s1.pi.clone(),
        certificates,
        multipliers,
    }
}

#[allow(clippy::too_many_arguments)]
fn step2_triple(
    h: Polynomial,
    gamma0: f64,
    pi: &[Polynomial],
    omega: &Polynomial,
    ocerts: &[Certificate],
    psi: &[Polynomial],
    pcerts: &[Certificate],
    s1: Option<&Step1Result>,
    phi: Polynomial,
    xi: Polynomial,
    slacks: BTreeMap<String, Polynomial>,
    certs: Vec<Certificate>,
) -> DtcbfTriple {
    let mut multipliers = BTreeMap::new();
    if let Some(s1) = s1 {
        multipliers.extend(s1.aux.clone());
        multipliers.insert("Lambda".into(), s1.lambda.clone());
    }
    multipliers.extend(slacks);
    multipliers.insert("Omega".into(), omega.clone());
    multipliers.insert("Phi".into(), phi);
    multipliers.insert("Xi".into(), xi);
    for (r, p) in psi.iter().enumerate() {
        multipliers.insert(format!("Psi[{r}]"), p.clone());
    }
    let mut certificates = certs;
    certificates.extend(with_labels(ocerts, "Omega"));
    certificates.extend(with_labels(pcerts, "Psi"));
    DtcbfTriple {
        h,
        gamma0,
        pi: pi.to_vec(),
        certificates,
        multipliers,
    }
}

fn policy_update(k: usize, h_prev: &Polynomial, s1: &Step1Result) -> PolicyUpdate {
    let stand_ins = s1
        .classes
        .keys()
        .filter_map(|alpha| {
            s1.aux
                .get(&format!("pi_tilde[{}]", alpha_label(alpha)))
                .map(|p| (alpha.clone(), p.clone()))
        })
        .collect();
    PolicyUpdate {
        k,
        h_prev: h_prev.clone(),
        gamma0: s1.gamma0,
        pi: s1.pi.clone(),
        stand_ins,
        classes: s1.classes.clone(),
    }
}

/// Alternates Step 1, the decrease multiplier and Step 2 until Step 2 stops
/// making progress.
fn alternate(
    plant: &PlantModel,
    input: &InputPolytope,
    safe: &SafeSet,
    cfg: &SynthesisConfig,
    area: Option<&AreaEstimator>,
    observer: &mut dyn FnMut(&IterationLog),
) -> Result<SynthesisResult, SynthError> {
    let mut res = not_run(cfg, plant.m);
    res.termination = Termination::MaxIters;
    let mut h_prev = cfg.h0.clone();
    let mut fallback: Option<DtcbfTriple> = None;
    let mut ahead: Option<(Step1Result, f64)> = None;
    for k in 1..=cfg.max_iters {
        let mut log = new_log(k);
        let t0 = Instant::now();
        let (s1, s1_seconds) = match ahead.take() {
            Some(a) => a,
            None => {
                let p1 = build_step1(&h_prev, plant, input, cfg)?;
                (solve_step1(&p1, cfg, k)?, 0.0)
            }
        };
        log.step1 = StepStatus::Solved;
        log.gamma0 = Some(s1.gamma0);
        res.updates.push(policy_update(k, &h_prev, &s1));
        let omega = match find_omega(&h_prev, plant, &s1.pi, s1.gamma0, cfg, k) {
            Ok(o) => o,
            Err(SynthError::OmegaInfeasible { .. }) if res.certified => {
                log.step1_seconds = s1_seconds + t0.elapsed().as_secs_f64();
                res.logs.push(log.clone());
                observer(&log);
                res.termination = Termination::OmegaInfeasible;
                break;
            }
            Err(e) => return Err(e),
        };
        let (omega, ocerts) = omega;
        if !res.certified && fallback.is_none() {
            fallback = Some(step1_triple(&h_prev, &s1, &omega, &ocerts));
        }
        log.step1_seconds = s1_seconds + t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let step2 = |release: bool| -> Result<Step2Outcome, SynthError> {
            let inp = Step2Input {
                h_prev: &h_prev,
                gamma0: s1.gamma0,
                pi: &s1.pi,
                omega: &omega,
                psi: &s1.psi,
                reimpose: Some(&s1),
                release,
            };
            solve_step2(&build_step2(&inp, plant, input, safe, cfg)?, cfg, k)
        };
        let release = s1.classes.values().any(|c| *c == SignClass::Zero);
        let mut out = step2(release)?;
        if release {
            let mut keep = false;
            if let Step2Outcome::Improved { h, .. } = &out {
                let t = Instant::now();
                let next = build_step1(&normalized(h), plant, input, cfg).and_then(|p| solve_step1(&p, cfg, k + 1));
                if let Ok(next) = next {
                    ahead = Some((next, t.elapsed().as_secs_f64()));
                    keep = true;
                }
            }
            if !keep {
                out = step2(false)?;
            }
        }
        log.step2_seconds = t1.elapsed().as_secs_f64();
        match out {
            Step2Outcome::Improved {
                h,
                delta,
                phi,
                xi,
                slacks,
                certificates,
            } => {
                log.step2 = StepStatus::Solved;
                log.delta = Some(delta);
                log_area(area, &h, &mut log);
                let psi_certs: Vec<Certificate> = with_labels(&s1.certificates, "Psi").collect();
                res.triple = step2_triple(
                    h.clone(),
                    s1.gamma0,
                    &s1.pi,
                    &omega,
                    &ocerts,
                    &s1.psi,
                    &psi_certs,
                    Some(&s1),
                    phi,
                    xi,
                    slacks,
                    certificates,
                );
                res.certified = true;
                res.history.push(h.clone());
                res.margins.push(delta);
                h_prev = normalized(&h);
                res.logs.push(log.clone());
                observer(&log);
            }
            Step2Outcome::Stalled { delta } => {
                log.step2 = StepStatus::Stalled;
                log.delta = Some(delta);
                res.termination = Termination::Stalled;
                res.logs.push(log.clone());
                observer(&log);
                break;
            }
            Step2Outcome::Infeasible => {
                log.step2 = StepStatus::Infeasible;
                res.termination = Termination::Step2Infeasible;
                res.logs.push(log.clone());
                observer(&log);
                break;
            }
        }
    }
    if !res.certified {
        if let Some(t) = fallback {
            res.triple = t;
            res.certified = true;
        }
    }
    Ok(res)
}

/// Step 2 alone with `(gamma0, pi)` of `warm` fixed.
fn fixed_policy(
    plant: &PlantModel,
    input: &InputPolytope,
    safe: &SafeSet,
    cfg: &SynthesisConfig,
    warm: SynthesisResult,
    area: Option<&AreaEstimator>,
    observer: &mut dyn FnMut(&IterationLog),
) -> Result<SynthesisResult, SynthError> {
    let mut res = warm;
    let gamma0 = res.triple.gamma0;
    let pi = res.triple.pi.clone();
    let mut h_prev = normalized(&res.triple.h);
    let k0 = res.logs.len();
    let mut improved = false;
    res.termination = Termination::MaxIters;
    for j in 1..=cfg.max_iters {
        let k = k0 + j;
        let mut log = new_log(k);
        log.gamma0 = Some(gamma0);
        let t1 = Instant::now();
        let (omega, ocerts) = match find_omega(&h_prev, plant, &pi, gamma0, cfg, k) {
            Ok(o) => o,
            Err(SynthError::OmegaInfeasible { .. }) => {
                res.termination = Termination::OmegaInfeasible;
                break;
            }
            Err(e) => return Err(e),
        };
        let (psi, pcerts) = find_psi(&h_prev, plant, input, &pi, cfg, k)?;
        let inp = Step2Input {
            h_prev: &h_prev,
            gamma0,
            pi: &pi,
            omega: &omega,
            psi: &psi,
            reimpose: None,
            release: false,
        };
        let p2 = build_step2(&inp, plant, input, safe, cfg)?;
        let out = solve_step2(&p2, cfg, k)?;
        log.step2_seconds = t1.elapsed().as_secs_f64();
        match out {
            Step2Outcome::Improved {
                h,
                delta,
                phi,
                xi,
                slacks,
                certificates,
            } => {
                log.step2 = StepStatus::Solved;
                log.delta = Some(delta);
                log_area(area, &h, &mut log);
                res.triple = step2_triple(
                    h.clone(),
                    gamma0,
                    &pi,
                    &omega,
                    &ocerts,
                    &psi,
                    &pcerts,
                    None,
                    phi,
                    xi,
                    slacks,
                    certificates,
                );
                res.history.push(h.clone());
                res.margins.push(delta);
                h_prev = normalized(&h);
                improved = true;
                res.logs.push(log.clone());
                observer(&log);
            }
            Step2Outcome::Stalled { delta } => {
                log.step2 = StepStatus::Stalled;
                log.delta = Some(delta);
                res.termination = Termination::Stalled;
                res.logs.push(log.clone());
                observer(&log);
                break;
            }
            Step2Outcome::Infeasible => {
                log.step2 = StepStatus::Infeasible;
                res.termination = Termination::Step2Infeasible;
                res.logs.push(log.clone());
                observer(&log);
                break;
            }
        }
    }
    if !improved {
        res.no_improvement = true;
        res.termination = Termination::NoImprovement;
    }
    Ok(res)
}

/// Runs the loop on shifted inputs `mu = u + c >= 0` and maps the policy
/// back.
fn cascaded(
    plant: &PlantModel,
    input: &InputPolytope,
    safe: &SafeSet,
    cfg: &SynthesisConfig,
    area: Option<&AreaEstimator>,
    observer: &mut dyn FnMut(&IterationLog),
) -> Result<SynthesisResult, SynthError> {
    let shifted = match &cfg.input_shift {
        InputShift::Auto => shift_input(plant, input)?,
        InputShift::Fixed(c) => shift_by(plant, input, c.clone())?,
    };
    let mut poly = shifted.polytope.clone();
    for i in 0..plant.m {
        let present = poly.m_rows.iter().zip(&poly.d).any(|(row, d)| {
            d.abs() < 1e-12 && row[i] > 0.0 && row.iter().enumerate().all(|(j, v)| j == i || *v == 0.0)
        });
        if !present {
            let mut row = vec![0.0; plant.m];
            row[i] = 1.0;
            poly.m_rows.push(row);
            poly.d.push(0.0);
        }
    }
    let mut res = alternate(&shifted.plant, &poly, safe, cfg, area, observer)?;
    for (p, c) in res.triple.pi.iter_mut().zip(&shifted.c) {
        *p = &*p - &Polynomial::constant(*c);
    }
    res.shift = Some(shifted.c);
    Ok(res)
}

fn remap_monomial(m: &Monomial, map: &[VarId]) -> Monomial {
    Monomial::from_pairs(m.pairs().iter().map(|&(v, e)| (map[v as usize], e)))
}

fn lift_certificate(c: &mut Certificate, keep: &[VarId]) {
    for b in &mut c.bases {
        for m in b.iter_mut() {
            *m = remap_monomial(m, keep);
        }
    }
    for row in &mut c.entries {
        for p in row.iter_mut() {
            *p = p.remap(keep);
        }
    }
}

/// Maps every polynomial from subsystem variables back to the full state.
fn lift(res: &mut SynthesisResult, keep: &[VarId]) {
    let t = &mut res.triple;
    t.h = t.h.remap(keep);
    for p in &mut t.pi {
        *p = p.remap(keep);
    }
    for p in t.multipliers.values_mut() {
        *p = p.remap(keep);
    }
    for c in &mut t.certificates {
        lift_certificate(c, keep);
    }
    for h in &mut res.history {
        *h = h.remap(keep);
    }
    for u in &mut res.updates {
        u.h_prev = u.h_prev.remap(keep);
        for p in &mut u.pi {
            *p = p.remap(keep);
        }
        for p in u.stand_ins.values_mut() {
            *p = p.remap(keep);
        }
    }
}
