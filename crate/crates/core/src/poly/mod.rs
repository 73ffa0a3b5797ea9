//! Sparse multivariate polynomial algebra.
//!
//! [`Polynomial`] carries real coefficients; [`ParamPolynomial`] carries
//! coefficients that are affine in scalar decision variables and refuses to
//! form products that would be bilinear in them. [`expand_in_policy`] splits
//! `h(f(x) + g(x) u)` into coefficients of the input monomials.

mod affine;
mod expansion;
mod monomial;
mod param;
mod parse;
mod polynomial;

pub use affine::{AffineExpr, DecVar};
pub use expansion::{expand_in_policy, policy_power, InputIndex, PolicyExpansion};
pub use monomial::{Monomial, VarId};
pub use param::ParamPolynomial;
pub use parse::{parse_monomial, parse_polynomial, VarNames};
pub use polynomial::{PolyMatrix, Polynomial};

use thiserror::Error;

/// Terms whose coefficient falls below this magnitude after arithmetic are
/// dropped.
pub const COEFF_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("product of two expressions that both depend on decision variables")]
    BilinearProduct,
    #[error("substitution provides {got} polynomials but {needed} are required")]
    ArityMismatch { needed: usize, got: usize },
    #[error("point has dimension {got} but the polynomial needs {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },
}
