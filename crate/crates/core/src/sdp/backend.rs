//! Pluggable solver backends.

use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{ipm, read_sdpa_solution, residuals, write_sdpa, SdpError, SdpProblem, Solution};
use super::{SolverSettings, Status};

/// Anything that can solve an [`SdpProblem`].
pub trait SdpBackend {
    fn submit(&self, problem: &SdpProblem) -> Result<Solution, SdpError>;
}

/// The built-in interior-point solver.
#[derive(Clone, Debug, Default)]
pub struct InteriorPoint {
    pub settings: SolverSettings,
}

impl InteriorPoint {
    pub fn new(settings: SolverSettings) -> Self {
        InteriorPoint { settings }
    }
}

impl SdpBackend for InteriorPoint {
    fn submit(&self, problem: &SdpProblem) -> Result<Solution, SdpError> {
        ipm::solve(problem, &self.settings)
    }
}

/// Returns a fixed solution for every problem of matching shape.
#[derive(Clone, Debug)]
pub struct EchoBackend {
    pub solution: Solution,
}

impl EchoBackend {
    pub fn new(solution: Solution) -> Self {
        EchoBackend { solution }
    }
}

impl SdpBackend for EchoBackend {
    fn submit(&self, problem: &SdpProblem) -> Result<Solution, SdpError> {
        let s = &self.solution;
        let shape_ok = s.x_free.len() == problem.n_free
            && s.x_nonneg.len() == problem.n_nonneg
            && s.y.len() == problem.rows.len()
            && s.x_psd.len() == problem.psd_sizes.len()
            && s.x_psd.iter().zip(&problem.psd_sizes).all(|(m, &n)| m.nrows() == n);
        if !shape_ok {
            return Err(SdpError::Malformed("canned solution has the wrong shape".into()));
        }
        let mut out = s.clone();
        out.residuals = residuals(problem, &out);
        Ok(out)
    }
}

/// Runs an external SDPA-format solver (CSDP command line convention:
/// `program problem.dat-s solution.sol`).
#[derive(Clone, Debug)]
pub struct ExternalSolver {
    pub program: PathBuf,
    pub args: Vec<String>,
}

static COUNTER: AtomicUsize = AtomicUsize::new(0);

impl ExternalSolver {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        ExternalSolver {
            program: program.into(),
            args: Vec::new(),
        }
    }
}

impl SdpBackend for ExternalSolver {
    fn submit(&self, problem: &SdpProblem) -> Result<Solution, SdpError> {
        problem.validate()?;
        let id = COUNTER.fetch_add(1, Ordering::Relaxed);
        let dir = std::env::temp_dir();
        let stem = format!("dtcbf-{}-{id}", std::process::id());
        let input = dir.join(format!("{stem}.dat-s"));
        let output = dir.join(format!("{stem}.sol"));
        std::fs::write(&input, write_sdpa(problem)).map_err(|e| SdpError::Io(e.to_string()))?;
        let run = Command::new(&self.program)
            .args(&self.args)
            .arg(&input)
            .arg(&output)
            .output();
        let _ = std::fs::remove_file(&input);
        let out = match run {
            Ok(o) => o,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(SdpError::BackendUnavailable(format!(
                    "{} not found",
                    self.program.display()
                )))
            }
            Err(e) => return Err(SdpError::Io(e.to_string())),
        };
        let status = match out.status.code() {
            Some(0) => Status::Optimal,
            Some(1) => Status::Infeasible,
            Some(2) => Status::Unbounded,
            Some(3) | Some(4) => Status::MaxIters,
            _ => Status::NumericalFailure,
        };
        let text = std::fs::read_to_string(&output);
        let _ = std::fs::remove_file(&output);
        let text = match text {
            Ok(t) => t,
            Err(_) => return Ok(Solution::zeros(problem, Status::NumericalFailure)),
        };
        let mut sol = read_sdpa_solution(&text, problem)?;
        sol.status = status;
        Ok(sol)
    }
}
