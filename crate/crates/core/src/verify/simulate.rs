//! Closed-loop rollouts under the synthesized policy.

use serde::{Deserialize, Serialize};

use crate::synth::{DtcbfTriple, PlantModel, SafeSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `x_0, ..., x_N`.
    pub states: Vec<Vec<f64>>,
    /// First step with `h < -tol` or `s < -tol`.
    pub first_violation: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub trajectories: usize,
    pub steps: usize,
    /// Trajectories with at least one violation.
    pub violating: usize,
    pub min_h: f64,
    pub min_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationResult {
    pub summary: SimulationSummary,
    pub trajectories: Vec<Trajectory>,
}

/// Runs `x+ = f(x) + g(x) pi(x)` for `steps` steps from each initial state
/// and flags states leaving `C` or `S` by more than `tol`.
pub fn simulate(
    triple: &DtcbfTriple,
    plant: &PlantModel,
    safe: &SafeSet,
    x0s: &[Vec<f64>],
    steps: usize,
    tol: f64,
) -> SimulationResult {
    let mut summary = SimulationSummary {
        trajectories: x0s.len(),
        steps,
        violating: 0,
        min_h: f64::INFINITY,
        min_s: f64::INFINITY,
    };
    let mut trajectories = Vec::with_capacity(x0s.len());
    for x0 in x0s {
        let mut states = Vec::with_capacity(steps + 1);
        let mut first_violation = None;
        let mut x = x0.clone();
        for k in 0..=steps {
            let h = triple.h.eval(&x);
            let s = safe.s.eval(&x);
            summary.min_h = summary.min_h.min(h);
            summary.min_s = summary.min_s.min(s);
            if first_violation.is_none() && (h < -tol || s < -tol || !h.is_finite()) {
                first_violation = Some(k);
            }
            let u: Vec<f64> = triple.pi.iter().map(|p| p.eval(&x)).collect();
            let next = plant.step(&x, &u);
            states.push(std::mem::replace(&mut x, next));
        }
        if first_violation.is_some() {
            summary.violating += 1;
        }
        trajectories.push(Trajectory { states, first_violation });
    }
    SimulationResult { summary, trajectories }
}
