//! Result bundles: a directory holding the resolved problem, the result,
//! the certificates, iteration logs and derived files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::poly::{parse_polynomial, Polynomial, VarId, VarNames};
use crate::sosir::Certificate;
use crate::synth::{DtcbfTriple, IterationLog, SynthesisResult, Termination};
use crate::verify::VerificationReport;

use super::spec::{parse_spec, ProblemSpec, SpecError};

pub const SPEC_FILE: &str = "spec.toml";
pub const RESULT_FILE: &str = "result.json";
pub const CERTIFICATES_FILE: &str = "certificates.json";
pub const LOG_FILE: &str = "iterations.jsonl";
pub const VERIFICATION_FILE: &str = "verification.json";

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Spec {
        path: PathBuf,
        #[source]
        source: SpecError,
    },
    #[error("{0}")]
    Invalid(String),
}

/// A polynomial as text plus its dense exponent/coefficient table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyRecord {
    pub text: String,
    pub terms: Vec<TermRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub exponents: Vec<u32>,
    pub coefficient: f64,
}

impl PolyRecord {
    pub fn new(p: &Polynomial, n: usize) -> Self {
        PolyRecord {
            text: p.to_string(),
            terms: p
                .terms()
                .map(|(m, c)| TermRecord {
                    exponents: m.dense(n),
                    coefficient: c,
                })
                .collect(),
        }
    }

    /// The polynomial, read from the text form.
    pub fn polynomial(&self, n: usize) -> Result<Polynomial, BundleError> {
        parse_polynomial(&self.text, &VarNames::new(n, 0))
            .map_err(|e| BundleError::Invalid(format!("polynomial `{}`: {e}", self.text)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleRecord {
    pub h: PolyRecord,
    pub gamma0: f64,
    pub pi: Vec<PolyRecord>,
    pub multipliers: BTreeMap<String, PolyRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub n: usize,
    pub m: usize,
    pub certified: bool,
    pub termination: Termination,
    pub triple: TripleRecord,
    /// `h0` followed by every accepted barrier.
    pub history: Vec<PolyRecord>,
    pub margins: Vec<f64>,
    pub states: Vec<VarId>,
    pub shift: Option<Vec<f64>>,
    pub no_improvement: bool,
    pub logs: Vec<IterationLog>,
    pub seconds: f64,
}

impl ResultRecord {
    pub fn new(res: &SynthesisResult, n: usize, m: usize, seconds: f64) -> Self {
        let rec = |p: &Polynomial| PolyRecord::new(p, n);
        ResultRecord {
            n,
            m,
            certified: res.certified,
            termination: res.termination,
            triple: TripleRecord {
                h: rec(&res.triple.h),
                gamma0: res.triple.gamma0,
                pi: res.triple.pi.iter().map(rec).collect(),
                multipliers: res.triple.multipliers.iter().map(|(k, p)| (k.clone(), rec(p))).collect(),
            },
            history: res.history.iter().map(rec).collect(),
            margins: res.margins.clone(),
            states: res.states.clone(),
            shift: res.shift.clone(),
            no_improvement: res.no_improvement,
            logs: res.logs.clone(),
            seconds,
        }
    }
}

/// A loaded bundle directory.
#[derive(Clone, Debug)]
pub struct ResultBundle {
    pub dir: PathBuf,
    pub spec: ProblemSpec,
    pub result: ResultRecord,
    pub certificates: Vec<Certificate>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BundleError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| BundleError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, BundleError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|source| BundleError::Json {
        path: path.to_path_buf(),
        source,
    })
}

impl ResultBundle {
    /// Writes spec, result and certificates into `dir`.
    pub fn write(
        dir: &Path,
        spec: &ProblemSpec,
        result: &ResultRecord,
        certificates: &[Certificate],
    ) -> Result<(), BundleError> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        let p = dir.join(SPEC_FILE);
        fs::write(&p, spec.to_toml()).map_err(io(&p))?;
        write_json(&dir.join(RESULT_FILE), result)?;
        write_json(&dir.join(CERTIFICATES_FILE), &certificates)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, BundleError> {
        let sp = dir.join(SPEC_FILE);
        let spec = parse_spec(&sp).map_err(|source| BundleError::Spec { path: sp, source })?;
        let result: ResultRecord = read_json(&dir.join(RESULT_FILE))?;
        let cp = dir.join(CERTIFICATES_FILE);
        let certificates = if cp.exists() { read_json(&cp)? } else { Vec::new() };
        if result.n != spec.plant.n || result.m != spec.plant.m || result.triple.pi.len() != spec.plant.m {
            return Err(BundleError::Invalid("result dimensions do not match the problem".into()));
        }
        Ok(ResultBundle {
            dir: dir.to_path_buf(),
            spec,
            result,
            certificates,
        })
    }

    pub fn triple(&self) -> Result<DtcbfTriple, BundleError> {
        let n = self.result.n;
        let t = &self.result.triple;
        Ok(DtcbfTriple {
            h: t.h.polynomial(n)?,
            gamma0: t.gamma0,
            pi: t.pi.iter().map(|p| p.polynomial(n)).collect::<Result<_, _>>()?,
            certificates: self.certificates.clone(),
            multipliers: t
                .multipliers
                .iter()
                .map(|(k, p)| Ok((k.clone(), p.polynomial(n)?)))
                .collect::<Result<_, BundleError>>()?,
        })
    }

    pub fn history(&self) -> Result<Vec<Polynomial>, BundleError> {
        self.result.history.iter().map(|p| p.polynomial(self.result.n)).collect()
    }

    pub fn write_report(&self, report: &VerificationReport) -> Result<(), BundleError> {
        write_json(&self.dir.join(VERIFICATION_FILE), report)
    }
}
