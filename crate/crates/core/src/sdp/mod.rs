//! Standard-form conic programs with free, non-negative and PSD blocks.
//!
//! ```text
//! minimize    c'x
//! subject to  A x = b,   x = (x_free, x_nonneg >= 0, X_1 >= 0, ..., X_k >= 0)
//! ```
//!
//! PSD variables are addressed by their upper triangle: a row entry
//! `(Psd { block, row: p, col: q }, a)` with `p <= q` contributes `a * X[p][q]`
//! (each off-diagonal entry counted once).

mod backend;
mod ipm;
mod linalg;
mod presolve;
mod sdpa;

pub use backend::{EchoBackend, ExternalSolver, InteriorPoint, SdpBackend};
pub use ipm::solve;
pub use sdpa::{read_sdpa, read_sdpa_solution, write_sdpa};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A scalar coordinate of the stacked variable vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Column {
    Free(usize),
    NonNeg(usize),
    Psd { block: usize, row: usize, col: usize },
}

/// A sparse equality constraint `sum coef * column = rhs`.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Row {
    pub entries: Vec<(Column, f64)>,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct SdpProblem {
    pub n_free: usize,
    pub n_nonneg: usize,
    pub psd_sizes: Vec<usize>,
    pub rows: Vec<Row>,
    /// Objective coefficients (same addressing as rows).
    pub objective: Vec<(Column, f64)>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("SDPA format error on line {line}: {message}")]
    Format { line: usize, message: String },
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `k` free variables and returns the first index.
    pub fn add_free(&mut self, k: usize) -> usize {
        self.n_free += k;
        self.n_free - k
    }

    pub fn add_nonneg(&mut self, k: usize) -> usize {
        self.n_nonneg += k;
        self.n_nonneg - k
    }

    /// Adds a PSD block of the given order and returns its index.
    pub fn add_psd(&mut self, size: usize) -> usize {
        self.psd_sizes.push(size);
        self.psd_sizes.len() - 1
    }

    pub fn add_row(&mut self, entries: Vec<(Column, f64)>, rhs: f64) -> usize {
        self.rows.push(Row { entries, rhs });
        self.rows.len() - 1
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Total scalar dimension of the stacked variable (PSD blocks counted by
    /// their upper triangles).
    pub fn n_scalars(&self) -> usize {
        self.n_free
            + self.n_nonneg
            + self.psd_sizes.iter().map(|n| n * (n + 1) / 2).sum::<usize>()
    }

    /// Checks indices and finiteness.
    pub fn validate(&self) -> Result<(), SdpError> {
        let check = |c: &Column, v: f64| -> Result<(), SdpError> {
            if !v.is_finite() {
                return Err(SdpError::Malformed(format!("non-finite coefficient on {c:?}")));
            }
            let ok = match *c {
                Column::Free(i) => i < self.n_free,
                Column::NonNeg(i) => i < self.n_nonneg,
                Column::Psd { block, row, col } => {
                    block < self.psd_sizes.len() && row <= col && col < self.psd_sizes[block]
                }
            };
            if ok {
                Ok(())
            } else {
                Err(SdpError::Malformed(format!("column {c:?} out of range")))
            }
        };
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() {
                return Err(SdpError::Malformed(format!("row {i} has non-finite rhs")));
            }
            for (c, v) in &r.entries {
                check(c, *v)?;
            }
        }
        for (c, v) in &self.objective {
            check(c, *v)?;
        }
        if self.psd_sizes.iter().any(|&s| s == 0) {
            return Err(SdpError::Malformed("empty PSD block".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub feas_tol: f64,
    pub gap_tol: f64,
    /// Tolerance for accepting an infeasibility certificate.
    pub infeas_tol: f64,
    /// Fraction-to-boundary step factor.
    pub step: f64,
    /// When progress stalls, the best iterate is reported optimal if its
    /// residuals and gap are below this.
    pub accept_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iters: 200,
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            infeas_tol: 1e-8,
            step: 0.99,
            accept_tol: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    /// Primal infeasible; `Solution::y` holds a Farkas certificate scaled
    /// to `b'y = 1`.
    Infeasible,
    /// Dual infeasible; the primal part holds an improving ray.
    Unbounded,
    MaxIters,
    NumericalFailure,
}

/// Residuals recomputed from the returned vectors on the original problem.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `||A x - b||_inf`
    pub primal: f64,
    /// `||A_f' y - c_f||_inf`; the conic dual slack is derived as
    /// `c_c - A_c' y`, so its violation is reported in `dual_cone`.
    pub dual: f64,
    /// `|c'x - b'y|`
    pub gap: f64,
    /// Most negative eigenvalue over primal cone blocks (0 if none).
    pub primal_cone: f64,
    /// Most negative eigenvalue over dual cone blocks (0 if none).
    pub dual_cone: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub status: Status,
    pub x_free: Vec<f64>,
    pub x_nonneg: Vec<f64>,
    pub x_psd: Vec<DMatrix<f64>>,
    pub y: Vec<f64>,
    pub s_nonneg: Vec<f64>,
    pub s_psd: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl Solution {
    pub fn value(&self, c: Column) -> f64 {
        match c {
            Column::Free(i) => self.x_free[i],
            Column::NonNeg(i) => self.x_nonneg[i],
            Column::Psd { block, row, col } => self.x_psd[block][(row, col)],
        }
    }

    /// A solution of the right shape with every entry zero.
    pub fn zeros(p: &SdpProblem, status: Status) -> Self {
        Solution {
            status,
            x_free: vec![0.0; p.n_free],
            x_nonneg: vec![0.0; p.n_nonneg],
            x_psd: p.psd_sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
            y: vec![0.0; p.rows.len()],
            s_nonneg: vec![0.0; p.n_nonneg],
            s_psd: p.psd_sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
            primal_objective: 0.0,
            dual_objective: 0.0,
            residuals: Residuals::default(),
            iterations: 0,
        }
    }
}

/// Recomputes residuals of `(x, y)` against `p`; `s` is derived as
/// `c_c - A_c' y`.
pub fn residuals(p: &SdpProblem, sol: &Solution) -> Residuals {
    let mut r = Residuals::default();
    let mut aty_free = vec![0.0; p.n_free];
    let mut aty_nonneg = vec![0.0; p.n_nonneg];
    let mut aty_psd: Vec<DMatrix<f64>> = p.psd_sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    for (i, row) in p.rows.iter().enumerate() {
        let mut ax = 0.0;
        for &(c, a) in &row.entries {
            ax += a * sol.value(c);
            add_scaled_column(c, a * sol.y[i], &mut aty_free, &mut aty_nonneg, &mut aty_psd);
        }
        r.primal = r.primal.max((ax - row.rhs).abs());
    }
    let mut c_free = vec![0.0; p.n_free];
    let mut c_nonneg = vec![0.0; p.n_nonneg];
    let mut c_psd: Vec<DMatrix<f64>> = p.psd_sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    let mut pobj = 0.0;
    for &(c, a) in &p.objective {
        pobj += a * sol.value(c);
        add_scaled_column(c, a, &mut c_free, &mut c_nonneg, &mut c_psd);
    }
    let dobj: f64 = p.rows.iter().zip(&sol.y).map(|(row, y)| row.rhs * y).sum();
    for j in 0..p.n_free {
        r.dual = r.dual.max((aty_free[j] - c_free[j]).abs());
    }
    for j in 0..p.n_nonneg {
        let s = c_nonneg[j] - aty_nonneg[j];
        r.dual_cone = r.dual_cone.min(s);
        r.primal_cone = r.primal_cone.min(sol.x_nonneg[j]);
    }
    for (k, _) in p.psd_sizes.iter().enumerate() {
        let s = &c_psd[k] - &aty_psd[k];
        r.dual_cone = r.dual_cone.min(linalg::min_eigenvalue(&s));
        r.primal_cone = r.primal_cone.min(linalg::min_eigenvalue(&sol.x_psd[k]));
    }
    r.gap = (pobj - dobj).abs();
    r
}

/// Adds `v` times the symmetric matrix/vector unit of column `c`.
pub(crate) fn add_scaled_column(
    c: Column,
    v: f64,
    free: &mut [f64],
    nonneg: &mut [f64],
    psd: &mut [DMatrix<f64>],
) {
    match c {
        Column::Free(i) => free[i] += v,
        Column::NonNeg(i) => nonneg[i] += v,
        Column::Psd { block, row, col } => {
            if row == col {
                psd[block][(row, row)] += v;
            } else {
                psd[block][(row, col)] += 0.5 * v;
                psd[block][(col, row)] += 0.5 * v;
            }
        }
    }
}
