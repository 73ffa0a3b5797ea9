//! The policy update, the decrease and admissibility multipliers, and the
//! barrier update.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::poly::{
    expand_in_policy, AffineExpr, DecVar, InputIndex, Monomial, ParamPolynomial, Polynomial,
    VarId,
};
use crate::sdp::{write_sdpa, InteriorPoint, Status};
use crate::sosir::{Certificate, Objective, SosError, SosProgram, SosSolution};

use super::relax::{classify, relaxed_value, Aux, RelaxSpec, SignClass};
use super::{
    Extension, GammaObjective, InputPolytope, PlantModel, SafeSet, SynthError, SynthesisConfig,
    GAMMA_MIN,
};

pub(crate) fn state_vars(n: usize) -> Vec<VarId> {
    (0..n as VarId).collect()
}

fn backend(cfg: &SynthesisConfig) -> InteriorPoint {
    InteriorPoint::new(cfg.solver.clone())
}

/// Solves `prog`, writing the lowered SDP when an export directory is set.
pub(crate) fn solve_program(prog: &SosProgram, cfg: &SynthesisConfig, name: &str) -> Result<SosSolution, SosError> {
    if let Some(dir) = &cfg.export_dir {
        let lowered = prog.lower()?;
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
        let path = dir.join(format!("{name}-{stamp}.dat-s"));
        std::fs::write(&path, write_sdpa(&lowered.sdp))
            .map_err(|e| SosError::Solver(crate::sdp::SdpError::Io(e.to_string())))?;
    }
    prog.solve(&backend(cfg), &cfg.tolerances)
}

fn policy_degrees(cfg: &SynthesisConfig) -> Vec<u32> {
    cfg.pi_bases
        .iter()
        .map(|b| b.iter().map(Monomial::degree).max().unwrap_or(0))
        .collect()
}

fn poly_var(v: DecVar) -> ParamPolynomial {
    ParamPolynomial::linear_combination([(v, Monomial::one())])
}

/// Step 1 as an SOS program together with handles to its unknowns.
#[derive(Clone, Debug)]
pub struct Step1Program {
    pub prog: SosProgram,
    pub gamma: DecVar,
    pub pi: Vec<ParamPolynomial>,
    pub lambda: ParamPolynomial,
    pub psi: Vec<ParamPolynomial>,
    pub aux: BTreeMap<String, ParamPolynomial>,
    pub classes: BTreeMap<InputIndex, SignClass>,
    /// Multipliers certifying each sign class on `{h_prev >= 0}`.
    pub signs: BTreeMap<InputIndex, Polynomial>,
}

/// Instantiated Step 1 unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct Step1Result {
    pub gamma0: f64,
    pub pi: Vec<Polynomial>,
    pub lambda: Polynomial,
    pub psi: Vec<Polynomial>,
    pub aux: BTreeMap<String, Polynomial>,
    pub classes: BTreeMap<InputIndex, SignClass>,
    pub signs: BTreeMap<InputIndex, Polynomial>,
    pub certificates: Vec<Certificate>,
}

/// Policy update for a fixed barrier `h_prev`: find `gamma0`, `pi`, the
/// product stand-ins and multipliers such that the relaxed decrease
/// condition and admissibility hold on `{h_prev >= 0}`.
pub fn build_step1(
    h_prev: &Polynomial,
    plant: &PlantModel,
    input: &InputPolytope,
    cfg: &SynthesisConfig,
) -> Result<Step1Program, SynthError> {
    let vars = state_vars(plant.n);
    let hp = ParamPolynomial::from_poly(h_prev);
    let exp = expand_in_policy(&hp, &plant.f, &plant.g)?;
    let be = backend(cfg);
    let mut classes = BTreeMap::new();
    let mut signs = BTreeMap::new();
    let generic = expand_in_policy(&SosProgram::new().declare_free_poly(&cfg.h_basis), &plant.f, &plant.g)?;
    for (alpha, _) in generic.a() {
        classes.insert(alpha.clone(), SignClass::Zero);
        signs.insert(alpha.clone(), Polynomial::zero());
    }
    for (alpha, a) in exp.a() {
        let a = a.as_constant().unwrap_or_default();
        let (class, lambda) = classify(&a, h_prev, plant.n, &be, &cfg.tolerances);
        classes.insert(alpha.clone(), class);
        signs.insert(alpha.clone(), lambda);
    }

    let mut prog = SosProgram::new();
    let gamma = prog.new_bounded_var(Some(GAMMA_MIN), Some(1.0));
    let pi: Vec<ParamPolynomial> = cfg.pi_bases.iter().map(|b| prog.declare_free_poly(b)).collect();
    let pi_degrees = policy_degrees(cfg);
    let (relaxed, aux) = {
        let mut aux = Aux::new(&mut prog, vars.clone(), None);
        let spec = RelaxSpec {
            h: &hp,
            expansion: &exp,
            pi: &pi,
            pi_degrees: &pi_degrees,
            classes: &classes,
            degrees: &cfg.degrees,
            cascade: cfg.extension == Extension::Cascaded,
            sign_multipliers: None,
            release: None,
        };
        let r = relaxed_value(&mut aux, &spec)?;
        (r, aux.created)
    };
    let lambda = prog.sos_multiplier(&vars, cfg.degrees.lambda, "Lambda");
    let expr = relaxed
        .sub(&hp)
        .add(&ParamPolynomial::var_times(gamma, h_prev))
        .sub(&lambda.mul_poly(h_prev));
    prog.add_scalar_sos(expr, "decrease_relaxed");
    let mut psi = Vec::with_capacity(input.n_rows());
    for r in 0..input.n_rows() {
        let m = prog.sos_multiplier(&vars, cfg.degrees.psi, &format!("Psi[{r}]"));
        prog.add_scalar_sos(input.slack_poly(r, &pi).sub(&m.mul_poly(h_prev)), &format!("admissible[{r}]"));
        psi.push(m);
    }
    prog.set_objective(match cfg.gamma {
        GammaObjective::Maximize => Objective::Maximize(AffineExpr::var(gamma)),
        GammaObjective::Target(t) => Objective::Target {
            expr: AffineExpr::var(gamma),
            target: t,
        },
    });
    Ok(Step1Program {
        prog,
        gamma,
        pi,
        lambda,
        psi,
        aux,
        classes,
        signs,
    })
}

/// Solves Step 1. At `k = 1` infeasibility points at the initial barrier.
pub fn solve_step1(p: &Step1Program, cfg: &SynthesisConfig, k: usize) -> Result<Step1Result, SynthError> {
    let sol = match solve_program(&p.prog, cfg, &format!("k{k}-step1")) {
        Ok(sol) => sol,
        Err(SosError::NotSolved(Status::Infeasible)) => {
            return Err(SynthError::Step1Infeasible {
                k,
                guidance: if k == 1 {
                    "the initial barrier admits no admissible policy; try a smaller circular \
                     initial barrier h0 = r^2 - |x|^2 centred in the safe set"
                        .into()
                } else {
                    "infeasible after a successful first iteration, which indicates a numerical problem"
                        .into()
                },
            })
        }
        Err(e) => return Err(SynthError::numerical(k, "step 1", e)),
    };
    let sol = if cfg.backoff > 0.0 {
        let g = sol.value(p.gamma);
        let mut interior = p.prog.clone();
        interior.add_linear_ineq(&AffineExpr::var(p.gamma) - &AffineExpr::constant(g - cfg.backoff));
        interior.add_linear_ineq(&AffineExpr::constant(g) - &AffineExpr::var(p.gamma));
        interior.set_objective(Objective::Feasibility);
        solve_program(&interior, cfg, &format!("k{k}-step1-interior")).unwrap_or(sol)
    } else {
        sol
    };
    Ok(Step1Result {
        gamma0: sol.value(p.gamma).clamp(GAMMA_MIN, 1.0),
        pi: p.pi.iter().map(|q| sol.instantiate(q)).collect(),
        lambda: sol.instantiate(&p.lambda),
        psi: p.psi.iter().map(|q| sol.instantiate(q)).collect(),
        aux: p.aux.iter().map(|(k, q)| (k.clone(), sol.instantiate(q))).collect(),
        classes: p.classes.clone(),
        signs: p.signs.clone(),
        certificates: sol.certificates,
    })
}

/// `h_prev(f + g pi) - h_prev + gamma0 h_prev - Omega h_prev` SOS for an SOS
/// `Omega` of the configured degree, retried once two degrees higher.
pub fn find_omega(
    h_prev: &Polynomial,
    plant: &PlantModel,
    pi: &[Polynomial],
    gamma0: f64,
    cfg: &SynthesisConfig,
    k: usize,
) -> Result<(Polynomial, Vec<Certificate>), SynthError> {
    let vars = state_vars(plant.n);
    let closed = plant.compose_closed_loop(h_prev, pi);
    let base = &(&closed - h_prev) + &h_prev.scale(gamma0);
    let mut last = None;
    for deg in [cfg.degrees.omega, cfg.degrees.omega + 2] {
        let mut prog = SosProgram::new();
        let omega = prog.sos_multiplier(&vars, deg, "Omega");
        prog.add_scalar_sos(ParamPolynomial::from_poly(&base).sub(&omega.mul_poly(h_prev)), "decrease");
        match solve_program(&prog, cfg, &format!("k{k}-omega")) {
            Ok(sol) => return Ok((sol.instantiate(&omega), sol.certificates)),
            Err(e) => last = Some(e),
        }
    }
    match last {
        Some(SosError::NotSolved(Status::Infeasible)) | None => Err(SynthError::OmegaInfeasible { k }),
        Some(e) => Err(SynthError::numerical(k, "omega", e)),
    }
}

/// Admissibility multipliers `(M pi + d)_r - Psi_r h_prev` SOS for a fixed
/// policy.
pub fn find_psi(
    h_prev: &Polynomial,
    plant: &PlantModel,
    input: &InputPolytope,
    pi: &[Polynomial],
    cfg: &SynthesisConfig,
    k: usize,
) -> Result<(Vec<Polynomial>, Vec<Certificate>), SynthError> {
    let vars = state_vars(plant.n);
    let pi: Vec<ParamPolynomial> = pi.iter().map(ParamPolynomial::from_poly).collect();
    let mut prog = SosProgram::new();
    let mut psi = Vec::new();
    for r in 0..input.n_rows() {
        let m = prog.sos_multiplier(&vars, cfg.degrees.psi, &format!("Psi[{r}]"));
        prog.add_scalar_sos(input.slack_poly(r, &pi).sub(&m.mul_poly(h_prev)), &format!("admissible[{r}]"));
        psi.push(m);
    }
    let sol = solve_program(&prog, cfg, &format!("k{k}-psi")).map_err(|e| SynthError::numerical(k, "psi", e))?;
    Ok((psi.iter().map(|p| sol.instantiate(p)).collect(), sol.certificates))
}

/// Fixed data for Step 2.
#[derive(Clone, Debug)]
pub struct Step2Input<'a> {
    pub h_prev: &'a Polynomial,
    pub gamma0: f64,
    pub pi: &'a [Polynomial],
    pub omega: &'a Polynomial,
    pub psi: &'a [Polynomial],
    /// Step 1 output whose relaxed decrease condition and product bounds are
    /// re-imposed on the new barrier; `None` skips them.
    pub reimpose: Option<&'a Step1Result>,
    /// Let products that vanished for `h_prev` enter with their exact value
    /// instead of keeping their coefficients at zero. Step 1 at the new
    /// barrier is then no longer guaranteed to be feasible.
    pub release: bool,
}

#[derive(Clone, Debug)]
pub struct Step2Program {
    pub prog: SosProgram,
    pub h: ParamPolynomial,
    pub delta: DecVar,
    pub phi: ParamPolynomial,
    pub xi: ParamPolynomial,
    pub slacks: BTreeMap<String, ParamPolynomial>,
}

/// Barrier update with the policy fixed: maximize `delta` subject to the
/// exact decrease condition, admissibility, containment in `S` and
/// `h >= delta` on `{h_prev >= 0}`.
pub fn build_step2(
    inp: &Step2Input,
    plant: &PlantModel,
    input: &InputPolytope,
    safe: &SafeSet,
    cfg: &SynthesisConfig,
) -> Result<Step2Program, SynthError> {
    let vars = state_vars(plant.n);
    let mut prog = SosProgram::new();
    let h = prog.declare_free_poly(&cfg.h_basis);
    let delta = prog.new_bounded_var(None, Some(cfg.delta_max));
    let exp = expand_in_policy(&h, &plant.f, &plant.g)?;
    let pi: Vec<ParamPolynomial> = inp.pi.iter().map(ParamPolynomial::from_poly).collect();

    let closed = exp.recombine(inp.pi);
    let dec = closed.sub(&h).add(&h.scale(inp.gamma0)).sub(&h.mul_poly(inp.omega));
    prog.add_scalar_sos(dec, "decrease");
    for (r, psi) in inp.psi.iter().enumerate() {
        prog.add_scalar_sos(input.slack_poly(r, &pi).sub(&h.mul_poly(psi)), &format!("admissible[{r}]"));
    }
    let phi = prog.sos_multiplier(&vars, cfg.degrees.phi, "Phi");
    let cont = h
        .scale(-1.0)
        .add_poly(&Polynomial::constant(-cfg.epsilon))
        .add(&phi.mul_poly(&safe.s));
    prog.add_scalar_sos(cont, "containment");
    let xi = prog.sos_multiplier(&vars, cfg.degrees.big_xi, "Xi");
    let enl = h.sub(&poly_var(delta)).sub(&xi.mul_poly(inp.h_prev));
    prog.add_scalar_sos(enl, "enlarge");

    let mut slacks = BTreeMap::new();
    if let Some(s1) = inp.reimpose {
        let pi_degrees = policy_degrees(cfg);
        let mut aux = Aux::new(&mut prog, vars.clone(), Some(&s1.aux));
        let spec = RelaxSpec {
            h: &h,
            expansion: &exp,
            pi: &pi,
            pi_degrees: &pi_degrees,
            classes: &s1.classes,
            degrees: &cfg.degrees,
            cascade: cfg.extension == Extension::Cascaded,
            sign_multipliers: Some(&s1.signs),
            release: inp.release.then_some(inp.pi),
        };
        let relaxed = relaxed_value(&mut aux, &spec)?;
        slacks = aux.created;
        let expr = relaxed.sub(&h).add(&h.scale(s1.gamma0)).sub(&h.mul_poly(&s1.lambda));
        prog.add_scalar_sos(expr, "decrease_relaxed");
    }
    prog.set_objective(Objective::Maximize(AffineExpr::var(delta)));
    Ok(Step2Program {
        prog,
        h,
        delta,
        phi,
        xi,
        slacks,
    })
}

#[derive(Clone, Debug)]
pub enum Step2Outcome {
    Improved {
        h: Polynomial,
        delta: f64,
        phi: Polynomial,
        xi: Polynomial,
        slacks: BTreeMap<String, Polynomial>,
        certificates: Vec<Certificate>,
    },
    /// Solved, but the best margin is below `delta`, so the program with
    /// margin `delta` is infeasible.
    Stalled { delta: f64 },
    Infeasible,
}

fn improved(p: &Step2Program, sol: SosSolution, delta: f64) -> Step2Outcome {
    Step2Outcome::Improved {
        h: sol.instantiate(&p.h),
        delta,
        phi: sol.instantiate(&p.phi),
        xi: sol.instantiate(&p.xi),
        slacks: p.slacks.iter().map(|(k, q)| (k.clone(), sol.instantiate(q))).collect(),
        certificates: sol.certificates,
    }
}

/// Solves Step 2. If the margin maximization does not converge, the
/// feasibility problem with margin fixed at `delta` decides.
pub fn solve_step2(p: &Step2Program, cfg: &SynthesisConfig, k: usize) -> Result<Step2Outcome, SynthError> {
    match solve_program(&p.prog, cfg, &format!("k{k}-step2")) {
        Ok(sol) => {
            let d = sol.value(p.delta);
            if d < cfg.delta {
                Ok(Step2Outcome::Stalled { delta: d })
            } else {
                Ok(improved(p, sol, d))
            }
        }
        Err(SosError::NotSolved(Status::Infeasible)) => Ok(Step2Outcome::Infeasible),
        Err(first) => {
            let mut fixed = p.prog.clone();
            fixed.add_linear_eq(&AffineExpr::var(p.delta) - &AffineExpr::constant(cfg.delta));
            fixed.set_objective(Objective::Feasibility);
            match solve_program(&fixed, cfg, &format!("k{k}-step2-fixed")) {
                Ok(sol) => Ok(improved(p, sol, cfg.delta)),
                Err(SosError::NotSolved(Status::Infeasible)) => Ok(Step2Outcome::Infeasible),
                Err(e) => Err(SynthError::numerical(k, "step 2", format!("{first}; fixed margin: {e}"))),
            }
        }
    }
}
