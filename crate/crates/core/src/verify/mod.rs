//! Sampling checks of a synthesized triple, closed-loop simulation,
//! re-validation of its Gram certificates and level-set extraction.
//!
//! Nothing here solves an optimization problem: conditions are checked by
//! evaluating polynomials and the plant map at seeded random points, so a
//! defect in the synthesis pipeline cannot certify its own output.

mod certificates;
mod levelset;
mod simulate;

pub use certificates::{check_certificates, summarize_certificates, CertificateFailure, CertificateReport};
pub use levelset::{levelset_sample, LevelSet, Plane};
pub use simulate::{simulate, SimulationResult, SimulationSummary, Trajectory};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::Polynomial;
use crate::sdp::InteriorPoint;
use crate::sosir::Tolerances;
use crate::synth::{safe_set_extent, DtcbfTriple, InputPolytope, PlantModel, SafeSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("degenerate bounds: {0}")]
    DegenerateBounds(String),
    #[error("unknown plane: {0}")]
    UnknownPlane(String),
    #[error("certificate check failed for {}", .0.join(", "))]
    CertificateResidual(Vec<String>),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Where and how densely to sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    /// Sampling box, one interval per state.
    pub bounds: Vec<(f64, f64)>,
    /// Accepted samples per condition.
    pub samples: usize,
    pub tol: f64,
    pub seed: u64,
}

impl SamplingSpec {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        SamplingSpec {
            bounds,
            samples: 100_000,
            tol: 1e-6,
            seed: 0,
        }
    }

    /// Bounding box of `S` inflated by `inflate` (relative) on every side.
    /// Coordinates along which `S` is unbounded get `[-free, free]`.
    pub fn around_safe_set(safe: &SafeSet, n: usize, inflate: f64, free: f64) -> Self {
        let backend = InteriorPoint::default();
        let bounds = safe_set_extent(safe, n, &backend, &Tolerances::default())
            .into_iter()
            .map(|e| match e {
                Some((a, b)) => {
                    let pad = 0.5 * (b - a) * inflate;
                    (a - pad, b + pad)
                }
                None => (-free, free),
            })
            .collect();
        SamplingSpec::new(bounds)
    }

    fn validate(&self, n: usize) -> Result<(), VerifyError> {
        if self.bounds.len() != n {
            return Err(VerifyError::Shape(format!("{} sampling intervals for {n} states", self.bounds.len())));
        }
        if self.bounds.iter().any(|&(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(VerifyError::DegenerateBounds(format!("{:?}", self.bounds)));
        }
        Ok(())
    }
}

/// Seeded rejection sampler over a box. Streams are independent, so the
/// first `N` accepted points of a stream are a prefix of the first `2N`.
pub(crate) struct Sampler<'a> {
    rng: ChaCha8Rng,
    bounds: &'a [(f64, f64)],
}

impl<'a> Sampler<'a> {
    pub(crate) fn new(bounds: &'a [(f64, f64)], seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Sampler { rng, bounds }
    }

    fn draw(&mut self) -> Vec<f64> {
        self.bounds.iter().map(|&(a, b)| self.rng.gen_range(a..b)).collect()
    }

    /// Up to `count` points satisfying `accept`, giving up after
    /// `100 * count + 10_000` draws.
    pub(crate) fn accepted(&mut self, count: usize, accept: impl Fn(&[f64]) -> bool) -> Vec<Vec<f64>> {
        let budget = 100 * count + 10_000;
        let mut out = Vec::with_capacity(count);
        for _ in 0..budget {
            if out.len() == count {
                break;
            }
            let x = self.draw();
            if accept(&x) {
                out.push(x);
            }
        }
        out
    }
}

pub(crate) const STREAM_INSIDE: u64 = 1;
const STREAM_OUTSIDE: u64 = 2;

/// Largest violation of one condition over its samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub samples: usize,
    pub max_violation: f64,
    pub worst_point: Option<Vec<f64>>,
}

impl ConditionReport {
    fn over(points: &[Vec<f64>], violation: impl Fn(&[f64]) -> f64) -> Self {
        let mut out = ConditionReport {
            samples: points.len(),
            max_violation: 0.0,
            worst_point: None,
        };
        for x in points {
            let v = violation(x);
            if v > out.max_violation || v.is_nan() {
                out.max_violation = if v.is_nan() { f64::INFINITY } else { v };
                out.worst_point = Some(x.clone());
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub tol: f64,
    pub seed: u64,
    /// `h(f + g pi) - h + gamma0 h >= 0` on `C`.
    pub decrease: ConditionReport,
    /// `M pi + d >= 0` on `C`.
    pub admissibility: ConditionReport,
    /// `s >= 0` on `C`.
    pub containment: ConditionReport,
    /// `h < 0` outside `S`.
    pub exclusion: ConditionReport,
    pub gamma0_in_range: bool,
    pub warnings: Vec<String>,
    pub simulation: Option<SimulationSummary>,
    pub certificates: Option<CertificateReport>,
}

impl VerificationReport {
    pub fn max_violation(&self) -> f64 {
        [&self.decrease, &self.admissibility, &self.containment, &self.exclusion]
            .iter()
            .map(|c| c.max_violation)
            .fold(0.0, f64::max)
    }

    /// Every sampled condition within `tol`, `gamma0` in `(0, 1]`, no
    /// violating trajectory and, when checked, every certificate valid.
    pub fn passes(&self) -> bool {
        self.max_violation() <= self.tol
            && self.gamma0_in_range
            && self.simulation.as_ref().is_none_or(|s| s.violating == 0)
            && self.certificates.as_ref().is_none_or(|c| c.failures.is_empty())
    }
}

/// Values of every checked quantity at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointValues {
    pub h: f64,
    pub s: f64,
    /// `h(f + g pi) - h + gamma0 h`.
    pub decrease: f64,
    /// Smallest entry of `M pi + d`.
    pub min_slack: f64,
}

pub fn point_values(triple: &DtcbfTriple, plant: &PlantModel, input: &InputPolytope, safe: &SafeSet, x: &[f64]) -> PointValues {
    let h = triple.h.eval(x);
    let u: Vec<f64> = triple.pi.iter().map(|p| p.eval(x)).collect();
    let next = plant.step(x, &u);
    let min_slack = (0..input.n_rows()).map(|r| input.slack(r, &u)).fold(f64::INFINITY, f64::min);
    PointValues {
        h,
        s: safe.s.eval(x),
        decrease: triple.h.eval(&next) - h + triple.gamma0 * h,
        min_slack,
    }
}

fn check_shapes(triple: &DtcbfTriple, plant: &PlantModel, input: &InputPolytope) -> Result<(), VerifyError> {
    if triple.pi.len() != plant.m || input.dim() != plant.m {
        return Err(VerifyError::Shape(format!(
            "policy has {} entries, input polytope {} columns, plant {} inputs",
            triple.pi.len(),
            input.dim(),
            plant.m
        )));
    }
    let too_big = |p: &Polynomial| p.max_var().is_some_and(|v| v as usize >= plant.n);
    if too_big(&triple.h) || triple.pi.iter().any(too_big) {
        return Err(VerifyError::Shape("triple uses a variable beyond the state".into()));
    }
    Ok(())
}

/// Samples of `C = {h >= 0}` in the box of `spec`, as used by
/// [`check_triple`].
pub fn sample_superlevel_set(h: &Polynomial, spec: &SamplingSpec, count: usize) -> Vec<Vec<f64>> {
    Sampler::new(&spec.bounds, spec.seed, STREAM_INSIDE).accepted(count, |x| h.eval(x) >= 0.0)
}

/// Checks the decrease, admissibility and containment conditions at
/// `spec.samples` points of `C` and exclusion at `spec.samples` points of
/// the box outside `S`.
pub fn check_triple(
    triple: &DtcbfTriple,
    plant: &PlantModel,
    input: &InputPolytope,
    safe: &SafeSet,
    spec: &SamplingSpec,
) -> Result<VerificationReport, VerifyError> {
    spec.validate(plant.n)?;
    check_shapes(triple, plant, input)?;
    let inside = sample_superlevel_set(&triple.h, spec, spec.samples);
    let outside = Sampler::new(&spec.bounds, spec.seed, STREAM_OUTSIDE).accepted(spec.samples, |x| !safe.contains(x));
    let mut warnings = Vec::new();
    if inside.is_empty() {
        warnings.push("no sample with h >= 0: the superlevel set is empty or too small to sample".into());
    } else if inside.len() < spec.samples {
        warnings.push(format!("only {} of {} samples of h >= 0 found", inside.len(), spec.samples));
    }
    if outside.len() < spec.samples {
        warnings.push(format!("only {} of {} samples outside S found", outside.len(), spec.samples));
    }
    let values = |x: &[f64]| point_values(triple, plant, input, safe, x);
    Ok(VerificationReport {
        tol: spec.tol,
        seed: spec.seed,
        decrease: ConditionReport::over(&inside, |x| -values(x).decrease),
        admissibility: ConditionReport::over(&inside, |x| -values(x).min_slack),
        containment: ConditionReport::over(&inside, |x| -safe.s.eval(x)),
        exclusion: ConditionReport::over(&outside, |x| triple.h.eval(x)),
        gamma0_in_range: triple.gamma0 > 0.0 && triple.gamma0 <= 1.0,
        warnings,
        simulation: None,
        certificates: None,
    })
}
