use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::COEFF_TOL;

/// Scalar decision variable of an SOS program.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct DecVar(pub u32);

/// `constant + sum_k weight_k * var_k`.
#[derive(Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AffineExpr {
    pub constant: f64,
    pub terms: BTreeMap<DecVar, f64>,
}

impl AffineExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        AffineExpr {
            constant: c,
            terms: BTreeMap::new(),
        }
    }

    pub fn var(v: DecVar) -> Self {
        Self::term(v, 1.0)
    }

    pub fn term(v: DecVar, w: f64) -> Self {
        let mut terms = BTreeMap::new();
        if w != 0.0 {
            terms.insert(v, w);
        }
        AffineExpr { constant: 0.0, terms }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.is_empty()
    }

    /// True when the expression references at least one decision variable.
    pub fn has_vars(&self) -> bool {
        !self.terms.is_empty()
    }

    pub fn weight(&self, v: DecVar) -> f64 {
        self.terms.get(&v).copied().unwrap_or(0.0)
    }

    pub fn add_term(&mut self, v: DecVar, w: f64) {
        let e = self.terms.entry(v).or_insert(0.0);
        *e += w;
        if e.abs() < COEFF_TOL {
            self.terms.remove(&v);
        }
    }

    pub fn scale(&self, s: f64) -> AffineExpr {
        let mut out = AffineExpr::constant(self.constant * s);
        if out.constant.abs() < COEFF_TOL {
            out.constant = 0.0;
        }
        for (&v, &w) in &self.terms {
            let x = w * s;
            if x.abs() >= COEFF_TOL {
                out.terms.insert(v, x);
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &AffineExpr, s: f64) {
        self.constant += other.constant * s;
        if self.constant.abs() < COEFF_TOL {
            self.constant = 0.0;
        }
        for (&v, &w) in &other.terms {
            self.add_term(v, w * s);
        }
    }

    /// Value under a full assignment of decision variables.
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|(v, w)| w * values[v.0 as usize])
                .sum::<f64>()
    }

    /// Largest absolute weight, constant included.
    pub fn max_abs(&self) -> f64 {
        self.terms
            .values()
            .fold(self.constant.abs(), |m, w| m.max(w.abs()))
    }
}

impl Add for &AffineExpr {
    type Output = AffineExpr;
    fn add(self, rhs: &AffineExpr) -> AffineExpr {
        let mut out = self.clone();
        out.add_scaled(rhs, 1.0);
        out
    }
}

impl Sub for &AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: &AffineExpr) -> AffineExpr {
        let mut out = self.clone();
        out.add_scaled(rhs, -1.0);
        out
    }
}

impl AddAssign<&AffineExpr> for AffineExpr {
    fn add_assign(&mut self, rhs: &AffineExpr) {
        self.add_scaled(rhs, 1.0);
    }
}

impl Neg for &AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &AffineExpr {
    type Output = AffineExpr;
    fn mul(self, rhs: f64) -> AffineExpr {
        self.scale(rhs)
    }
}

impl fmt::Debug for AffineExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.constant)?;
        for (v, w) in &self.terms {
            write!(f, " + {}*t{}", w, v.0)?;
        }
        Ok(())
    }
}
