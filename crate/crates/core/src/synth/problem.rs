//! Plant, input polytope and safe set.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::poly::{ParamPolynomial, PolyError, PolyMatrix, Polynomial, VarId};
use crate::sdp::{Column, InteriorPoint, SdpBackend, SdpProblem, Status};

use super::SynthError;

/// `x+ = f(x) + g(x) u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    pub n: usize,
    pub m: usize,
    pub f: Vec<Polynomial>,
    pub g: PolyMatrix,
}

impl PlantModel {
    pub fn new(f: Vec<Polynomial>, g: PolyMatrix) -> Result<Self, SynthError> {
        let n = f.len();
        let (rows, m) = g.shape();
        if rows != n {
            return Err(PolyError::ShapeMismatch(format!("g has {rows} rows, expected {n}")).into());
        }
        let max = f.iter().filter_map(Polynomial::max_var).chain(g.max_var()).max();
        if let Some(v) = max {
            if v as usize >= n {
                return Err(SynthError::Config(format!(
                    "plant uses variable index {v} but has only {n} states"
                )));
            }
        }
        Ok(PlantModel { n, m, f, g })
    }

    /// One step of the open-loop map.
    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let mut v = self.f[i].eval(x);
                for (j, uj) in u.iter().enumerate() {
                    v += self.g.get(i, j).eval(x) * uj;
                }
                v
            })
            .collect()
    }

    /// `f + g pi` as polynomials.
    pub fn closed_loop(&self, pi: &[Polynomial]) -> Vec<Polynomial> {
        let gpi = self.g.mul_vec(pi).expect("policy length matches input dimension");
        self.f.iter().zip(&gpi).map(|(a, b)| a + b).collect()
    }

    /// `h(f + g pi)`.
    pub fn compose_closed_loop(&self, h: &Polynomial, pi: &[Polynomial]) -> Polynomial {
        h.compose(&self.closed_loop(pi)).expect("h uses state variables only")
    }

    /// Smallest variable set containing `seed` whose update rows depend only
    /// on variables in the set.
    pub fn closed_subsystem(&self, seed: &BTreeSet<VarId>) -> Vec<VarId> {
        let mut keep = seed.clone();
        loop {
            let mut next = keep.clone();
            for &i in &keep {
                next.extend(self.f[i as usize].vars());
                for j in 0..self.m {
                    next.extend(self.g.get(i as usize, j).vars());
                }
            }
            if next == keep {
                return keep.into_iter().collect();
            }
            keep = next;
        }
    }

    /// The plant restricted to `keep` (which must be closed), with the
    /// variables renumbered `0..keep.len()`.
    pub fn restrict(&self, keep: &[VarId]) -> PlantModel {
        let map = restriction_map(self.n, keep);
        let f = keep.iter().map(|&i| self.f[i as usize].remap(&map)).collect();
        let mut g = PolyMatrix::zeros(keep.len(), self.m);
        for (r, &i) in keep.iter().enumerate() {
            for j in 0..self.m {
                g.set(r, j, self.g.get(i as usize, j).remap(&map));
            }
        }
        PlantModel {
            n: keep.len(),
            m: self.m,
            f,
            g,
        }
    }
}

/// `map[v]` is the position of `v` in `keep` (dropped variables map past the
/// end and must not occur).
pub(crate) fn restriction_map(n: usize, keep: &[VarId]) -> Vec<VarId> {
    let mut map = vec![keep.len() as VarId; n];
    for (k, &v) in keep.iter().enumerate() {
        map[v as usize] = k as VarId;
    }
    map
}

/// `{u : M u + d >= 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputPolytope {
    pub m_rows: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

impl InputPolytope {
    /// Checks shapes and that the set is non-empty.
    pub fn new(m_rows: Vec<Vec<f64>>, d: Vec<f64>) -> Result<Self, SynthError> {
        if m_rows.len() != d.len() {
            return Err(SynthError::Config(format!(
                "input polytope has {} rows in M but {} entries in d",
                m_rows.len(),
                d.len()
            )));
        }
        let dim = m_rows.first().map(Vec::len).unwrap_or(0);
        if m_rows.iter().any(|r| r.len() != dim) {
            return Err(SynthError::Config("ragged rows in M".into()));
        }
        let u = InputPolytope { m_rows, d };
        match u.lp(None)? {
            Status::Optimal => Ok(u),
            Status::Infeasible => Err(SynthError::InfeasibleInput),
            s => Err(SynthError::NumericalFailure {
                k: 0,
                stage: "input probe".into(),
                detail: format!("{s:?}"),
            }),
        }
    }

    /// The box `lower <= u <= upper`.
    pub fn from_box(lower: &[f64], upper: &[f64]) -> Result<Self, SynthError> {
        let m = lower.len();
        let mut rows = Vec::with_capacity(2 * m);
        let mut d = Vec::with_capacity(2 * m);
        for i in 0..m {
            let mut r = vec![0.0; m];
            r[i] = 1.0;
            rows.push(r.clone());
            d.push(-lower[i]);
            r[i] = -1.0;
            rows.push(r);
            d.push(upper[i]);
        }
        InputPolytope::new(rows, d)
    }

    pub fn dim(&self) -> usize {
        self.m_rows.first().map(Vec::len).unwrap_or(0)
    }

    pub fn n_rows(&self) -> usize {
        self.d.len()
    }

    /// `(M u + d)_r`.
    pub fn slack(&self, r: usize, u: &[f64]) -> f64 {
        self.m_rows[r].iter().zip(u).map(|(a, b)| a * b).sum::<f64>() + self.d[r]
    }

    /// `(M pi + d)_r` as a polynomial.
    pub fn slack_poly(&self, r: usize, pi: &[ParamPolynomial]) -> ParamPolynomial {
        let mut out = ParamPolynomial::constant(self.d[r]);
        for (j, p) in pi.iter().enumerate() {
            out.add_assign_scaled(p, self.m_rows[r][j]);
        }
        out
    }

    /// Per-coordinate `(min, max)` over the polytope.
    pub fn bounds(&self) -> Result<Vec<(f64, f64)>, SynthError> {
        let mut out = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let lo = self.extreme(i, 1.0)?;
            let hi = -self.extreme(i, -1.0)?;
            out.push((lo, hi));
        }
        Ok(out)
    }

    fn extreme(&self, i: usize, sign: f64) -> Result<f64, SynthError> {
        let sol = InteriorPoint::default().submit(&self.lp_problem(Some((i, sign))))?;
        match sol.status {
            Status::Optimal => Ok(sol.primal_objective),
            Status::Unbounded => Err(SynthError::UnboundedInputSet),
            Status::Infeasible => Err(SynthError::InfeasibleInput),
            s => Err(SynthError::NumericalFailure {
                k: 0,
                stage: "input bounds".into(),
                detail: format!("{s:?}"),
            }),
        }
    }

    fn lp(&self, obj: Option<(usize, f64)>) -> Result<Status, SynthError> {
        Ok(InteriorPoint::default().submit(&self.lp_problem(obj))?.status)
    }

    /// `M u - s = -d`, `s >= 0`, optionally minimizing `sign * u_i`.
    fn lp_problem(&self, obj: Option<(usize, f64)>) -> SdpProblem {
        let mut p = SdpProblem::new();
        let m = self.dim();
        let u0 = p.add_free(m);
        let s0 = p.add_nonneg(self.n_rows());
        for (r, row) in self.m_rows.iter().enumerate() {
            let mut e: Vec<(Column, f64)> = row
                .iter()
                .enumerate()
                .filter(|(_, a)| **a != 0.0)
                .map(|(j, a)| (Column::Free(u0 + j), *a))
                .collect();
            e.push((Column::NonNeg(s0 + r), -1.0));
            p.add_row(e, -self.d[r]);
        }
        if let Some((i, sign)) = obj {
            p.objective = vec![(Column::Free(u0 + i), sign)];
        }
        p
    }
}

/// `S = {x : s(x) >= 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafeSet {
    pub s: Polynomial,
}

impl SafeSet {
    pub fn new(s: Polynomial) -> Self {
        SafeSet { s }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.s.eval(x) >= 0.0
    }
}

/// Output of [`shift_input`]: `u~ = u + c` with `u~ >= 0` on the shifted
/// polytope.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftedInput {
    pub plant: PlantModel,
    pub c: Vec<f64>,
    pub polytope: InputPolytope,
}

/// Shifts the input so every coordinate is non-negative on the polytope.
/// `c_i = max(0, -min_U u_i)`, `f~ = f - g c`, `U~ = {u~ : M u~ + d - M c >= 0}`.
pub fn shift_input(plant: &PlantModel, u: &InputPolytope) -> Result<ShiftedInput, SynthError> {
    let bounds = u.bounds()?;
    let c: Vec<f64> = bounds.iter().map(|(lo, _)| clean(-lo).max(0.0)).collect();
    shift_by(plant, u, c)
}

/// Shift by a given vector `c`.
pub fn shift_by(plant: &PlantModel, u: &InputPolytope, c: Vec<f64>) -> Result<ShiftedInput, SynthError> {
    let gc: Vec<Polynomial> = plant
        .g
        .mul_vec(&c.iter().map(|&v| Polynomial::constant(v)).collect::<Vec<_>>())?;
    let f = plant.f.iter().zip(&gc).map(|(a, b)| a - b).collect();
    let d = u
        .m_rows
        .iter()
        .zip(&u.d)
        .map(|(row, d)| d - row.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    Ok(ShiftedInput {
        plant: PlantModel {
            n: plant.n,
            m: plant.m,
            f,
            g: plant.g.clone(),
        },
        c,
        polytope: InputPolytope {
            m_rows: u.m_rows.clone(),
            d,
        },
    })
}

/// Rounds LP noise so that exact bounds such as `1.5` come out exact.
fn clean(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if (v - r).abs() < 1e-6 {
        r
    } else {
        v
    }
}
