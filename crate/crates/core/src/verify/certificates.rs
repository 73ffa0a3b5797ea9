//! Re-validation of stored Gram certificates.

use serde::{Deserialize, Serialize};

use crate::sosir::{CertificateCheck, Tolerances};
use crate::synth::DtcbfTriple;

use super::VerifyError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateFailure {
    pub label: String,
    pub check: CertificateCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub checked: usize,
    pub min_eigenvalue: f64,
    pub max_residual: f64,
    pub failures: Vec<CertificateFailure>,
}

/// Checks every certificate of `triple`: the Gram matrix must have no
/// eigenvalue below `-tol.eig_tol` and must reproduce the certified
/// polynomials to within `tol.coeff_tol` per coefficient.
pub fn summarize_certificates(triple: &DtcbfTriple, tol: &Tolerances) -> CertificateReport {
    let mut out = CertificateReport {
        checked: triple.certificates.len(),
        min_eigenvalue: f64::INFINITY,
        max_residual: 0.0,
        failures: Vec::new(),
    };
    for c in &triple.certificates {
        let check = c.check();
        out.min_eigenvalue = out.min_eigenvalue.min(check.min_eigenvalue);
        out.max_residual = out.max_residual.max(check.residual);
        if !check.passes(tol) {
            out.failures.push(CertificateFailure {
                label: c.label.clone(),
                check,
            });
        }
    }
    out
}

/// Like [`summarize_certificates`], failing with the offending labels.
pub fn check_certificates(triple: &DtcbfTriple, tol: &Tolerances) -> Result<CertificateReport, VerifyError> {
    let report = summarize_certificates(triple, tol);
    if report.failures.is_empty() {
        Ok(report)
    } else {
        Err(VerifyError::CertificateResidual(
            report.failures.iter().map(|f| f.label.clone()).collect(),
        ))
    }
}
