//! Sum-of-squares programs and their lowering to semidefinite programs.
//!
//! An [`SosProgram`] collects scalar decision variables, polynomials that
//! are affine in them, and constraints requiring such polynomials (or
//! polynomial matrices) to be sums of squares. [`SosProgram::lower`]
//! produces a standard-form [`SdpProblem`](crate::sdp::SdpProblem) through
//! Gram parameterization; [`Lowered::lift`] maps a solver answer back to
//! decision-variable values and checked [`Certificate`]s.
//!
//! Matrix constraints `Q(x) >= 0` use a block-Gram form: with a basis `B_i`
//! per diagonal entry, `Q_ij = B_i' G_ij B_j` for one PSD matrix
//! `G = [G_ij]`. This is the Gram form of `y' Q(x) y` in the variables
//! `(x, y)` restricted to monomials linear in `y`, so the two are
//! equivalent.

mod basis;
mod certificate;
mod lower;

pub use basis::{gram_basis, half_support};
pub use certificate::{Certificate, CertificateCheck, SosSolution, Tolerances};
pub use lower::{ConstraintMap, Lowered};

use thiserror::Error;

use crate::poly::{AffineExpr, DecVar, Monomial, ParamPolynomial, PolyError, VarId};
use crate::sdp::{SdpBackend, SdpError, Status};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SosError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Solver(#[from] SdpError),
    #[error("matrix constraint {label:?} is not symmetric")]
    NotSymmetric { label: String },
    #[error("constraint {label:?} has an empty Gram basis")]
    EmptyBasis { label: String },
    #[error("decision variable {0} does not belong to this program")]
    UnknownVariable(u32),
    #[error("certificate for {label:?} fails reconstruction (residual {residual:e})")]
    CertificateResidual { label: String, residual: f64 },
    #[error("certificate for {label:?} is not PSD (min eigenvalue {min_eigenvalue:e})")]
    CertificateNotPsd { label: String, min_eigenvalue: f64 },
    #[error("solver returned {0:?}")]
    NotSolved(Status),
}

/// How a decision variable enters the lowered problem.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum VarKind {
    Free {
        lower: Option<f64>,
        upper: Option<f64>,
    },
    /// Upper-triangle entry `(p, q)` of the Gram matrix of SOS polynomial
    /// `poly`.
    Gram { poly: usize, p: usize, q: usize },
}

/// An SOS polynomial `z' Q z` declared as a decision object.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct SosPoly {
    pub label: String,
    pub basis: Vec<Monomial>,
    pub first_var: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    Scalar {
        label: String,
        expr: ParamPolynomial,
    },
    /// Symmetric polynomial matrix, stored as its upper triangle rows.
    Matrix {
        label: String,
        entries: Vec<Vec<ParamPolynomial>>,
    },
    /// `expr = 0`.
    LinearEq(AffineExpr),
    /// `expr >= 0`.
    LinearIneq(AffineExpr),
}

#[derive(Clone, Debug, PartialEq, Default)]
pub enum Objective {
    #[default]
    Feasibility,
    Minimize(AffineExpr),
    Maximize(AffineExpr),
    /// Minimize `|expr - target|`.
    Target { expr: AffineExpr, target: f64 },
}

/// Index of a constraint within its program.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConstraintId(pub usize);

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SosProgram {
    pub(crate) vars: Vec<VarKind>,
    pub(crate) sos_polys: Vec<SosPoly>,
    pub(crate) constraints: Vec<Constraint>,
    pub(crate) objective: Objective,
}

impl SosProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn new_var(&mut self) -> DecVar {
        self.new_bounded_var(None, None)
    }

    /// A scalar variable with optional bounds `lower <= v <= upper`.
    pub fn new_bounded_var(&mut self, lower: Option<f64>, upper: Option<f64>) -> DecVar {
        self.vars.push(VarKind::Free { lower, upper });
        DecVar(self.vars.len() as u32 - 1)
    }

    /// `sum_k v_k * basis_k` with fresh free coefficients.
    pub fn declare_free_poly(&mut self, basis: &[Monomial]) -> ParamPolynomial {
        ParamPolynomial::linear_combination(basis.iter().map(|m| (self.new_var(), m.clone())))
    }

    /// A polynomial `z' Q z` with `Q >= 0` over the given half-degree basis
    /// `z`; the entries of `Q` become decision variables.
    pub fn declare_sos_poly(&mut self, basis: &[Monomial], label: &str) -> ParamPolynomial {
        let idx = self.sos_polys.len();
        let first_var = self.vars.len() as u32;
        let n = basis.len();
        let mut out = ParamPolynomial::zero();
        for p in 0..n {
            for q in p..n {
                self.vars.push(VarKind::Gram { poly: idx, p, q });
                let v = DecVar(self.vars.len() as u32 - 1);
                let f = if p == q { 1.0 } else { 2.0 };
                out.add_term(basis[p].mul(&basis[q]), &AffineExpr::term(v, f));
            }
        }
        self.sos_polys.push(SosPoly {
            label: label.to_string(),
            basis: basis.to_vec(),
            first_var,
        });
        out
    }

    /// An SOS polynomial of (even) degree `degree` in `vars`, using every
    /// monomial up to half that degree.
    pub fn sos_multiplier(&mut self, vars: &[VarId], degree: u32, label: &str) -> ParamPolynomial {
        let basis = Monomial::all_up_to(vars, 0, degree / 2);
        self.declare_sos_poly(&basis, label)
    }

    /// A free polynomial of degree `degree` in `vars`.
    pub fn free_poly(&mut self, vars: &[VarId], degree: u32) -> ParamPolynomial {
        let basis = Monomial::all_up_to(vars, 0, degree);
        self.declare_free_poly(&basis)
    }

    /// Requires `expr` to be a sum of squares.
    pub fn add_scalar_sos(&mut self, expr: ParamPolynomial, label: &str) -> ConstraintId {
        self.constraints.push(Constraint::Scalar {
            label: label.to_string(),
            expr,
        });
        ConstraintId(self.constraints.len() - 1)
    }

    /// Requires the square matrix `q` to be an SOS matrix.
    pub fn add_matrix_sos(
        &mut self,
        q: Vec<Vec<ParamPolynomial>>,
        label: &str,
    ) -> Result<ConstraintId, SosError> {
        let n = q.len();
        let not_sym = || SosError::NotSymmetric {
            label: label.to_string(),
        };
        if q.iter().any(|r| r.len() != n) {
            return Err(not_sym());
        }
        if n == 0 {
            return Err(SosError::EmptyBasis {
                label: label.to_string(),
            });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if q[i][j].sub(&q[j][i]).max_abs_coeff() > 1e-12 {
                    return Err(not_sym());
                }
            }
        }
        self.constraints.push(Constraint::Matrix {
            label: label.to_string(),
            entries: q,
        });
        Ok(ConstraintId(self.constraints.len() - 1))
    }

    /// `expr = 0`.
    pub fn add_linear_eq(&mut self, expr: AffineExpr) -> ConstraintId {
        self.constraints.push(Constraint::LinearEq(expr));
        ConstraintId(self.constraints.len() - 1)
    }

    /// `expr >= 0`.
    pub fn add_linear_ineq(&mut self, expr: AffineExpr) -> ConstraintId {
        self.constraints.push(Constraint::LinearIneq(expr));
        ConstraintId(self.constraints.len() - 1)
    }

    /// Every coefficient of `p` equals zero.
    pub fn add_poly_eq(&mut self, p: &ParamPolynomial) {
        for (_, e) in p.terms() {
            self.add_linear_eq(e.clone());
        }
    }

    pub fn set_objective(&mut self, objective: Objective) {
        self.objective = objective;
    }

    /// Lowers, solves with `backend`, and lifts with certificate checks.
    pub fn solve(
        &self,
        backend: &dyn SdpBackend,
        tol: &Tolerances,
    ) -> Result<SosSolution, SosError> {
        let lowered = self.lower()?;
        let sol = backend.submit(&lowered.sdp)?;
        lowered.lift(self, &sol, tol)
    }
}
