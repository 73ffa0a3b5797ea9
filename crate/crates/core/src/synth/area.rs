//! Monte-Carlo area of zero-superlevel sets inside the safe set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::poly::{AffineExpr, Monomial, ParamPolynomial, Polynomial, VarId};
use crate::sdp::SdpBackend;
use crate::sosir::{Objective, SosProgram, Tolerances};

use super::SafeSet;

/// Axis-aligned bounding box of `S` from the SOS bounds
/// `t - x_i - lambda s` SOS (and the mirrored one), or `None` when some
/// coordinate is unbounded or the programs fail.
pub fn safe_set_box(
    safe: &SafeSet,
    n: usize,
    backend: &dyn SdpBackend,
    tol: &Tolerances,
) -> Option<Vec<(f64, f64)>> {
    safe_set_extent(safe, n, backend, tol).into_iter().collect()
}

/// Per-coordinate version of [`safe_set_box`]; `None` marks a coordinate
/// along which no bound was certified.
pub fn safe_set_extent(
    safe: &SafeSet,
    n: usize,
    backend: &dyn SdpBackend,
    tol: &Tolerances,
) -> Vec<Option<(f64, f64)>> {
    let vars: Vec<VarId> = (0..n as VarId).collect();
    let ldeg = safe.s.degree().saturating_sub(2).div_ceil(2) * 2;
    let end = |i: usize, sign: f64| -> Option<f64> {
        let mut prog = SosProgram::new();
        let t = prog.new_var();
        let lambda = prog.sos_multiplier(&vars, ldeg, "lambda");
        let expr = ParamPolynomial::linear_combination([(t, Monomial::one())])
            .add_poly(&Polynomial::var(i as VarId).scale(-sign))
            .sub(&lambda.mul_poly(&safe.s));
        prog.add_scalar_sos(expr, "bound");
        prog.set_objective(Objective::Minimize(AffineExpr::var(t)));
        let sol = prog.solve(backend, tol).ok()?;
        Some(sign * sol.value(t))
    };
    (0..n).map(|i| Some((end(i, -1.0)?, end(i, 1.0)?))).collect()
}

/// Fixed sample of points of `S`, reused for every barrier so that area
/// estimates of nested sets are monotone.
#[derive(Clone, Debug)]
pub struct AreaEstimator {
    points: Vec<Vec<f64>>,
    safe_area: f64,
}

impl AreaEstimator {
    pub fn new(safe: &SafeSet, bounds: &[(f64, f64)], samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let volume: f64 = bounds.iter().map(|(a, b)| b - a).product();
        let mut points = Vec::new();
        for _ in 0..samples {
            let x: Vec<f64> = bounds
                .iter()
                .map(|&(a, b)| if b > a { rng.gen_range(a..b) } else { a })
                .collect();
            if safe.contains(&x) {
                points.push(x);
            }
        }
        let safe_area = if samples == 0 {
            0.0
        } else {
            volume * points.len() as f64 / samples as f64
        };
        AreaEstimator { points, safe_area }
    }

    pub fn safe_area(&self) -> f64 {
        self.safe_area
    }

    /// Fraction of sampled points of `S` with `h >= 0`.
    pub fn ratio(&self, h: &Polynomial) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        let inside = self.points.iter().filter(|x| h.eval(x) >= 0.0).count();
        inside as f64 / self.points.len() as f64
    }

    pub fn area(&self, h: &Polynomial) -> f64 {
        self.ratio(h) * self.safe_area
    }
}
