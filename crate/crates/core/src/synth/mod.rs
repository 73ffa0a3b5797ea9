//! Alternating-descent synthesis of discrete-time control barrier functions.
//!
//! Each iteration solves a policy update (Step 1) for the current barrier
//! `h_prev`, finds a multiplier certifying the exact decrease condition, and
//! then enlarges the barrier with the policy fixed (Step 2). The loop stops
//! when the enlargement margin can no longer reach `delta`.
//!
//! Products of policy entries `pi_i pi_j` in `h(f + g pi)` are replaced by
//! auxiliary polynomials `pi~_ij` constrained so that
//! `a_ij (pi_i pi_j - pi~_ij) >= 0` on the current safe set. Which of the two
//! sides of that implication is imposed depends on the sign of `a_ij`,
//! determined once per iteration; see [`SignClass`].

mod area;
mod problem;
mod relax;
mod run;
mod steps;

pub use area::{safe_set_box, safe_set_extent, AreaEstimator};
pub use problem::{shift_by, shift_input, InputPolytope, PlantModel, SafeSet, ShiftedInput};
pub use relax::{build_cascade_constraints, classify, CascadeConstraints, SignClass};
pub use run::{run, run_fixed_policy, run_with_observer, PolicyUpdate, SynthesisResult, Termination};
pub use steps::{
    build_step1, build_step2, find_omega, find_psi, solve_step1, solve_step2, Step1Program,
    Step1Result, Step2Input, Step2Outcome, Step2Program,
};

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{Monomial, PolyError, Polynomial, VarId};
use crate::sdp::{SdpError, SolverSettings};
use crate::sosir::{Certificate, SosError, Tolerances};

/// Lower bound imposed on `gamma0` so that it stays in `(0, 1]`.
pub const GAMMA_MIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Solver(#[from] SdpError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("the input polytope is empty")]
    InfeasibleInput,
    #[error("the input polytope is unbounded")]
    UnboundedInputSet,
    #[error("step 1 infeasible at iteration {k}: {guidance}")]
    Step1Infeasible { k: usize, guidance: String },
    #[error("no decrease multiplier found at iteration {k}")]
    OmegaInfeasible { k: usize },
    #[error("numerical failure at iteration {k} ({stage}): {detail}")]
    NumericalFailure {
        k: usize,
        stage: String,
        detail: String,
    },
}

impl SynthError {
    pub(crate) fn numerical(k: usize, stage: &str, e: impl std::fmt::Display) -> Self {
        SynthError::NumericalFailure {
            k,
            stage: stage.to_string(),
            detail: e.to_string(),
        }
    }
}

impl From<SosError> for SynthError {
    fn from(e: SosError) -> Self {
        match e {
            SosError::Poly(p) => SynthError::Poly(p),
            SosError::Solver(s) => SynthError::Solver(s),
            other => SynthError::numerical(0, "sos", other),
        }
    }
}

/// Degrees of multipliers and auxiliary polynomials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Degrees {
    /// `Lambda` in the relaxed decrease condition.
    pub lambda: u32,
    /// `Omega` in the exact decrease condition.
    pub omega: u32,
    /// `Phi` in the containment condition.
    pub phi: u32,
    /// Entries of `Psi` in the admissibility condition.
    pub psi: u32,
    /// `Xi` in the enlargement condition.
    pub big_xi: u32,
    /// Multipliers of the diagonal product constraints.
    pub sigma: u32,
    /// Multipliers of the lower-bound product constraints.
    pub xi: u32,
    /// Multipliers of the upper-bound product constraints.
    pub eta: u32,
    /// Multipliers of the sign-side constraints of higher products.
    pub sigma_tilde: u32,
    /// Degree of `pi~_ij`; twice the policy degree when absent.
    pub pi_tilde: Option<u32>,
}

impl Default for Degrees {
    fn default() -> Self {
        Degrees {
            lambda: 2,
            omega: 2,
            phi: 2,
            psi: 2,
            big_xi: 2,
            sigma: 0,
            xi: 0,
            eta: 0,
            sigma_tilde: 0,
            pi_tilde: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaObjective {
    Maximize,
    /// Minimize `|gamma0 - value|`.
    Target(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extension {
    /// Quadratic `h`; input products of degree at most two.
    Quadratic,
    /// Shifted inputs with chained product bounds for higher degrees.
    Cascaded,
    /// Quadratic run, then Step 2 alone with the policy fixed.
    FixedPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputShift {
    Auto,
    Fixed(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub h0: Polynomial,
    pub h_basis: Vec<Monomial>,
    pub pi_bases: Vec<Vec<Monomial>>,
    pub degrees: Degrees,
    pub epsilon: f64,
    /// Smallest enlargement margin that counts as progress.
    pub delta: f64,
    /// Upper bound on the enlargement margin in Step 2.
    pub delta_max: f64,
    pub gamma: GammaObjective,
    /// After optimizing `gamma0`, Step 1 is solved again as a feasibility
    /// problem with `gamma0` in `[gamma* - backoff, gamma*]`, which yields
    /// a solution in the interior of the remaining constraints. Zero
    /// disables the second solve.
    pub backoff: f64,
    pub max_iters: usize,
    pub extension: Extension,
    pub input_shift: InputShift,
    /// Synthesize on the smallest closed subsystem containing the variables
    /// of `s` and `h0`.
    pub reduce_state: bool,
    pub area_samples: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub solver: SolverSettings,
    /// When set, every SDP is also written there in SDPA format.
    #[serde(skip)]
    pub export_dir: Option<PathBuf>,
}

impl SynthesisConfig {
    pub fn new(h0: Polynomial, h_basis: Vec<Monomial>, pi_bases: Vec<Vec<Monomial>>) -> Self {
        SynthesisConfig {
            h0,
            h_basis,
            pi_bases,
            degrees: Degrees::default(),
            epsilon: 1e-4,
            delta: 1e-4,
            delta_max: 1.0,
            gamma: GammaObjective::Maximize,
            backoff: 1e-4,
            max_iters: 100,
            extension: Extension::Quadratic,
            input_shift: InputShift::Auto,
            reduce_state: true,
            area_samples: 20_000,
            seed: 0,
            tolerances: Tolerances::default(),
            solver: SolverSettings::default(),
            export_dir: None,
        }
    }

    pub fn validate(&self, plant: &PlantModel) -> Result<(), SynthError> {
        if !(self.epsilon > 0.0) || !(self.delta > 0.0) {
            return Err(SynthError::Config("epsilon and delta must be positive".into()));
        }
        if !(self.backoff >= 0.0) {
            return Err(SynthError::Config("backoff must be non-negative".into()));
        }
        if self.delta_max < self.delta {
            return Err(SynthError::Config("delta_max must be at least delta".into()));
        }
        if self.pi_bases.len() != plant.m {
            return Err(SynthError::Config(format!(
                "{} policy bases given for {} inputs",
                self.pi_bases.len(),
                plant.m
            )));
        }
        let hdeg = self.h_basis.iter().map(Monomial::degree).max().unwrap_or(0);
        if hdeg % 2 != 0 {
            return Err(SynthError::Config(format!("h basis has odd degree {hdeg}")));
        }
        if self.h_basis.is_empty() {
            return Err(SynthError::Config("empty h basis".into()));
        }
        let too_big = |v: Option<VarId>| v.is_some_and(|v| v as usize >= plant.n);
        if too_big(self.h0.max_var())
            || self.h_basis.iter().chain(self.pi_bases.iter().flatten()).any(|m| too_big(m.max_var()))
        {
            return Err(SynthError::Config("basis or h0 uses a variable beyond the state".into()));
        }
        if let GammaObjective::Target(t) = self.gamma {
            if !(t > 0.0 && t <= 1.0) {
                return Err(SynthError::Config(format!("gamma target {t} outside (0, 1]")));
            }
        }
        if let InputShift::Fixed(c) = &self.input_shift {
            if c.len() != plant.m {
                return Err(SynthError::Config("input shift has wrong length".into()));
            }
        }
        Ok(())
    }
}

/// A barrier `h`, the linear class-K gain `gamma0` and a policy `pi`,
/// together with the certificates and multipliers that establish them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtcbfTriple {
    pub h: Polynomial,
    pub gamma0: f64,
    pub pi: Vec<Polynomial>,
    pub certificates: Vec<Certificate>,
    pub multipliers: BTreeMap<String, Polynomial>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Solved,
    Infeasible,
    /// Solved, but the margin fell below `delta`.
    Stalled,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub k: usize,
    pub step1: StepStatus,
    pub step2: StepStatus,
    pub gamma0: Option<f64>,
    pub delta: Option<f64>,
    /// Estimated area (volume) of `{h >= 0}`.
    pub area: Option<f64>,
    /// Estimated `area({h >= 0}) / area(S)`.
    pub area_ratio: Option<f64>,
    pub step1_seconds: f64,
    pub step2_seconds: f64,
}
