//! Lifting solver output back to polynomials and checked Gram certificates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::poly::{AffineExpr, DecVar, Monomial, ParamPolynomial, Polynomial};
use crate::sdp::{Solution, Status};

use super::lower::{ConstraintMap, Lowered};
use super::{Constraint, Objective, SosError, SosProgram};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Smallest admissible Gram eigenvalue is `-eig_tol`.
    pub eig_tol: f64,
    /// Largest admissible per-coefficient reconstruction error.
    pub coeff_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eig_tol: 1e-7,
            coeff_tol: 1e-6,
        }
    }
}

/// A Gram certificate `entries = B' G B` with `G >= 0`, where `B` is the
/// block-diagonal arrangement of `bases`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub label: String,
    pub bases: Vec<Vec<Monomial>>,
    pub gram: Vec<Vec<f64>>,
    /// The certified polynomial matrix (full, symmetric).
    pub entries: Vec<Vec<Polynomial>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub min_eigenvalue: f64,
    pub residual: f64,
    pub asymmetry: f64,
}

impl CertificateCheck {
    pub fn passes(&self, tol: &Tolerances) -> bool {
        self.min_eigenvalue >= -tol.eig_tol
            && self.residual <= tol.coeff_tol
            && self.asymmetry <= tol.coeff_tol
    }
}

impl Certificate {
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let n = self.gram.len();
        DMatrix::from_fn(n, n, |i, j| self.gram[i][j])
    }

    /// `B_i' G_ij B_j` for every block pair.
    pub fn reconstruct(&self) -> Vec<Vec<Polynomial>> {
        let n = self.bases.len();
        let mut offsets = Vec::with_capacity(n);
        let mut acc = 0;
        for b in &self.bases {
            offsets.push(acc);
            acc += b.len();
        }
        let mut out = vec![vec![Polynomial::zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut p = Polynomial::zero();
                for (a, ma) in self.bases[i].iter().enumerate() {
                    for (b, mb) in self.bases[j].iter().enumerate() {
                        p.add_term(ma.mul(mb), self.gram[offsets[i] + a][offsets[j] + b]);
                    }
                }
                out[i][j] = p;
            }
        }
        out
    }

    pub fn check(&self) -> CertificateCheck {
        let g = self.gram_matrix();
        let n = g.nrows();
        let mut asym = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                asym = asym.max((g[(i, j)] - g[(j, i)]).abs());
            }
        }
        let min_eigenvalue = if n == 0 {
            0.0
        } else {
            let s = (&g + g.transpose()) * 0.5;
            s.symmetric_eigen().eigenvalues.min()
        };
        let rec = self.reconstruct();
        let mut residual = 0.0f64;
        for (ri, ei) in rec.iter().zip(&self.entries) {
            for (r, e) in ri.iter().zip(ei) {
                residual = residual.max(r.max_abs_diff(e));
            }
        }
        CertificateCheck {
            min_eigenvalue,
            residual,
            asymmetry: asym,
        }
    }
}

/// Values of all decision variables plus one certificate per SOS
/// constraint and declared SOS polynomial.
#[derive(Clone, Debug)]
pub struct SosSolution {
    pub status: Status,
    pub values: Vec<f64>,
    pub objective: f64,
    pub certificates: Vec<Certificate>,
    pub sdp_iterations: usize,
}

impl SosSolution {
    pub fn value(&self, v: DecVar) -> f64 {
        self.values[v.0 as usize]
    }

    pub fn eval(&self, e: &AffineExpr) -> f64 {
        e.eval(&self.values)
    }

    pub fn instantiate(&self, p: &ParamPolynomial) -> Polynomial {
        p.instantiate(&self.values)
    }

    pub fn certificate(&self, label: &str) -> Option<&Certificate> {
        self.certificates.iter().find(|c| c.label == label)
    }
}

fn gram_block(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = m.nrows();
    (0..n)
        .map(|i| (0..n).map(|j| if i <= j { m[(i, j)] } else { m[(j, i)] }).collect())
        .collect()
}

impl Lowered {
    /// Maps an SDP solution back to the program and checks every Gram
    /// certificate against `tol`.
    pub fn lift(
        &self,
        prog: &SosProgram,
        sol: &Solution,
        tol: &Tolerances,
    ) -> Result<SosSolution, SosError> {
        if sol.status != Status::Optimal {
            return Err(SosError::NotSolved(sol.status));
        }
        let values: Vec<f64> = self.var_columns.iter().map(|&c| sol.value(c)).collect();
        let mut certificates = Vec::new();
        for (k, sp) in prog.sos_polys.iter().enumerate() {
            let mut poly = Polynomial::zero();
            let g = gram_block(&sol.x_psd[k]);
            for (a, ma) in sp.basis.iter().enumerate() {
                for (b, mb) in sp.basis.iter().enumerate() {
                    poly.add_term(ma.mul(mb), g[a][b]);
                }
            }
            certificates.push(Certificate {
                label: sp.label.clone(),
                bases: vec![sp.basis.clone()],
                gram: g,
                entries: vec![vec![poly]],
            });
        }
        for (c, map) in prog.constraints.iter().zip(&self.constraints) {
            let ConstraintMap::Sos {
                label, block, bases, ..
            } = map
            else {
                continue;
            };
            let entries: Vec<Vec<Polynomial>> = match c {
                Constraint::Scalar { expr, .. } => vec![vec![expr.instantiate(&values)]],
                Constraint::Matrix { entries, .. } => {
                    let n = entries.len();
                    (0..n)
                        .map(|i| {
                            (0..n)
                                .map(|j| entries[i.min(j)][i.max(j)].instantiate(&values))
                                .collect()
                        })
                        .collect()
                }
                _ => continue,
            };
            let gram = match block {
                Some(b) => gram_block(&sol.x_psd[*b]),
                None => Vec::new(),
            };
            certificates.push(Certificate {
                label: label.clone(),
                bases: bases.clone(),
                gram,
                entries,
            });
        }
        for cert in &certificates {
            let chk = cert.check();
            if chk.residual > tol.coeff_tol {
                return Err(SosError::CertificateResidual {
                    label: cert.label.clone(),
                    residual: chk.residual,
                });
            }
            if chk.min_eigenvalue < -tol.eig_tol {
                return Err(SosError::CertificateNotPsd {
                    label: cert.label.clone(),
                    min_eigenvalue: chk.min_eigenvalue,
                });
            }
        }
        let objective = match prog.objective() {
            Objective::Feasibility => 0.0,
            Objective::Minimize(e) | Objective::Maximize(e) => e.eval(&values),
            Objective::Target { expr, target } => (expr.eval(&values) - target).abs(),
        };
        Ok(SosSolution {
            status: sol.status,
            values,
            objective,
            certificates,
            sdp_iterations: sol.iterations,
        })
    }
}
