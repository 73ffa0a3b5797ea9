//! Command-line front end: `synthesize`, `verify`, `levelset`, `certify`.
//!
//! Exit codes: 0 success; 1 usage, input or verification failure; 2 the
//! first policy update was infeasible; 3 numerical failure.

mod bundle;
mod spec;

pub use bundle::{
    BundleError, PolyRecord, ResultBundle, ResultRecord, TermRecord, TripleRecord, CERTIFICATES_FILE, LOG_FILE,
    RESULT_FILE, SPEC_FILE, VERIFICATION_FILE,
};
pub use spec::{parse_spec, parse_spec_str, ProblemSpec, SpecError};

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::synth::{run_with_observer, Extension, GammaObjective, SynthError, Termination};
use crate::verify::{
    check_certificates, check_triple, levelset_sample, sample_superlevel_set, simulate, Plane, SamplingSpec,
    VerifyError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_STEP1_INFEASIBLE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable overriding the default output directory.
pub const OUT_DIR_ENV: &str = "DTCBF_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "dtcbf", version, about = "Synthesize and verify discrete-time control barrier functions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the alternating synthesis on a problem file and write a bundle.
    Synthesize(SynthesizeArgs),
    /// Sample the barrier conditions and simulate the closed loop.
    Verify(VerifyArgs),
    /// Write gridded barrier values on a coordinate plane as CSV.
    Levelset(LevelsetArgs),
    /// Re-check the stored Gram certificates.
    Certify(CertifyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ExtensionArg {
    Quadratic,
    Cascaded,
    FixedPolicy,
}

#[derive(clap::Args, Debug)]
pub struct SynthesizeArgs {
    pub spec: PathBuf,
    /// Bundle directory; defaults to `out/<spec name>`.
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Drive `gamma0` toward this value instead of maximizing it.
    #[arg(long)]
    pub gamma_target: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub extension: Option<ExtensionArg>,
    /// Also write every SDP in SDPA sparse format under `<out>/sdpa`.
    #[arg(long)]
    pub export_sdpa: bool,
    /// Samples per condition for the verification after synthesis.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long)]
    pub skip_verify: bool,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(clap::Args, Debug)]
pub struct VerifyArgs {
    pub bundle: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub trajectories: usize,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum IterationsArg {
    All,
    Final,
}

#[derive(clap::Args, Debug)]
pub struct LevelsetArgs {
    pub bundle: PathBuf,
    /// Two state names, e.g. `x3,x4`; other states are held at zero.
    #[arg(long)]
    pub plane: Option<String>,
    #[arg(long, default_value_t = 201)]
    pub resolution: usize,
    #[arg(long, value_enum, default_value_t = IterationsArg::Final)]
    pub iterations: IterationsArg,
    /// `a_min,a_max,b_min,b_max`; defaults to the box of the safe set.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub bounds: Option<Vec<f64>>,
}

#[derive(clap::Args, Debug)]
pub struct CertifyArgs {
    pub bundle: PathBuf,
    #[arg(long)]
    pub eig_tol: Option<f64>,
    #[arg(long)]
    pub coeff_tol: Option<f64>,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
        }
    };
    let out = match cli.command {
        Command::Synthesize(a) => cmd_synthesize(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Levelset(a) => cmd_levelset(&a),
        Command::Certify(a) => cmd_certify(&a),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn default_out_dir(spec: &Path) -> PathBuf {
    let stem = spec.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    PathBuf::from("out").join(stem)
}

/// Box of the safe set inflated by 20 %, with `[-1, 1]` on unbounded
/// coordinates.
fn sampling_spec(spec: &ProblemSpec) -> SamplingSpec {
    SamplingSpec::around_safe_set(&spec.safe, spec.plant.n, 0.2, 1.0)
}

pub fn cmd_synthesize(args: &SynthesizeArgs) -> Result<i32, CliError> {
    let mut spec = parse_spec(&args.spec)?;
    let cfg = &mut spec.config;
    if let Some(k) = args.max_iters {
        cfg.max_iters = k;
    }
    if let Some(t) = args.gamma_target {
        cfg.gamma = GammaObjective::Target(t);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.extension {
        cfg.extension = match e {
            ExtensionArg::Quadratic => Extension::Quadratic,
            ExtensionArg::Cascaded => Extension::Cascaded,
            ExtensionArg::FixedPolicy => Extension::FixedPolicy,
        };
    }
    let out = args.out.clone().unwrap_or_else(|| default_out_dir(&args.spec));
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    if args.export_sdpa {
        let dir = out.join("sdpa");
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        spec.config.export_dir = Some(dir);
    }
    let spec_path = out.join(SPEC_FILE);
    fs::write(&spec_path, spec.to_toml()).map_err(|e| io_err(&spec_path, e))?;
    let log_path = out.join(LOG_FILE);
    let mut log_file = fs::File::create(&log_path).map_err(|e| io_err(&log_path, e))?;

    let start = Instant::now();
    let quiet = args.quiet;
    let result = run_with_observer(&spec.plant, &spec.input, &spec.safe, &spec.config, &mut |log| {
        if let Ok(line) = serde_json::to_string(log) {
            let _ = writeln!(log_file, "{line}");
            let _ = log_file.flush();
        }
        if !quiet {
            eprintln!(
                "k={:<3} step1={:?} step2={:?} gamma0={} delta={} area_ratio={}",
                log.k,
                log.step1,
                log.step2,
                fmt_opt(log.gamma0),
                fmt_opt(log.delta),
                fmt_opt(log.area_ratio)
            );
        }
    });
    let res = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("synthesis failed: {e}");
            return Ok(match e {
                SynthError::Step1Infeasible { k: 1, .. } => EXIT_STEP1_INFEASIBLE,
                SynthError::Config(_) | SynthError::InfeasibleInput | SynthError::UnboundedInputSet => EXIT_FAILURE,
                _ => EXIT_NUMERICAL,
            });
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let record = ResultRecord::new(&res, spec.plant.n, spec.plant.m, seconds);
    ResultBundle::write(&out, &spec, &record, &res.triple.certificates)?;
    if !quiet {
        eprintln!(
            "termination: {:?} after {} iterations, {seconds:.1} s\nh = {}\ngamma0 = {}",
            res.termination,
            res.logs.len(),
            res.triple.h,
            res.triple.gamma0
        );
        for (i, p) in res.triple.pi.iter().enumerate() {
            eprintln!("pi{} = {p}", i + 1);
        }
    }
    if !args.skip_verify && res.certified {
        let mut sampling = sampling_spec(&spec);
        sampling.samples = args.samples;
        let report = check_triple(&res.triple, &spec.plant, &spec.input, &spec.safe, &sampling)?;
        write_json_file(&out.join(VERIFICATION_FILE), &report)?;
        if !quiet {
            eprintln!("verification: max violation {:.3e} over {} samples", report.max_violation(), args.samples);
        }
    }
    println!("{}", out.display());
    Ok(if res.certified || res.termination == Termination::NotRun {
        EXIT_OK
    } else {
        EXIT_FAILURE
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    bundle::write_json(path, value).map_err(CliError::from)
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32, CliError> {
    let b = ResultBundle::load(&args.bundle)?;
    let triple = b.triple()?;
    let mut sampling = sampling_spec(&b.spec);
    sampling.samples = args.samples;
    sampling.tol = args.tol;
    sampling.seed = args.seed;
    let mut report = check_triple(&triple, &b.spec.plant, &b.spec.input, &b.spec.safe, &sampling)?;
    let x0s = sample_superlevel_set(&triple.h, &sampling, args.trajectories);
    report.simulation = Some(simulate(&triple, &b.spec.plant, &b.spec.safe, &x0s, args.steps, args.tol).summary);
    b.write_report(&report)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let ok = report.passes();
    if !ok {
        for (name, c) in [
            ("decrease", &report.decrease),
            ("admissibility", &report.admissibility),
            ("containment", &report.containment),
            ("exclusion", &report.exclusion),
        ] {
            if c.max_violation > args.tol {
                eprintln!("{name} violated by {:.3e} at {:?}", c.max_violation, c.worst_point);
            }
        }
    }
    Ok(if ok { EXIT_OK } else { EXIT_FAILURE })
}

fn parse_plane(text: &str, n: usize) -> Result<Plane, VerifyError> {
    let idx = |s: &str| -> Option<usize> {
        let k: usize = s.trim().strip_prefix('x')?.parse().ok()?;
        (k >= 1 && k <= n).then(|| k - 1)
    };
    let parts: Vec<&str> = text.split(',').collect();
    match parts.as_slice() {
        [a, b] => match (idx(a), idx(b)) {
            (Some(i), Some(j)) => Plane::through_origin(n, i, j),
            _ => Err(VerifyError::UnknownPlane(text.into())),
        },
        _ => Err(VerifyError::UnknownPlane(text.into())),
    }
}

#[derive(Serialize)]
struct LevelsetEntry {
    iteration: usize,
    grid: String,
    boundary: String,
    positive_fraction: f64,
    boundary_points: usize,
}

#[derive(Serialize)]
struct LevelsetManifest {
    plane: [String; 2],
    bounds: [(f64, f64); 2],
    resolution: usize,
    files: Vec<LevelsetEntry>,
}

pub fn cmd_levelset(args: &LevelsetArgs) -> Result<i32, CliError> {
    let b = ResultBundle::load(&args.bundle)?;
    let n = b.spec.plant.n;
    let plane = match &args.plane {
        Some(p) => parse_plane(p, n)?,
        None => {
            let s = &b.result.states;
            let (i, j) = if s.len() >= 2 { (s[0] as usize, s[1] as usize) } else { (0, 1) };
            Plane::through_origin(n, i, j)?
        }
    };
    let bounds = match &args.bounds {
        Some(v) => [(v[0], v[1]), (v[2], v[3])],
        None => {
            let sb = sampling_spec(&b.spec).bounds;
            [sb[plane.axes.0], sb[plane.axes.1]]
        }
    };
    let history = b.history()?;
    let selected: Vec<(usize, &crate::poly::Polynomial)> = match args.iterations {
        IterationsArg::All => history.iter().enumerate().collect(),
        IterationsArg::Final => {
            let k = history.len().saturating_sub(1);
            history.last().map(|h| vec![(k, h)]).unwrap_or_default()
        }
    };
    let mut files = Vec::new();
    for (k, h) in selected {
        let ls = levelset_sample(h, &plane, bounds, args.resolution)?;
        let grid = format!("levelset_k{k}.csv");
        let boundary = format!("levelset_k{k}_boundary.csv");
        for (name, text) in [(&grid, ls.grid_csv()), (&boundary, ls.boundary_csv())] {
            let p = b.dir.join(name);
            fs::write(&p, text).map_err(|e| io_err(&p, e))?;
        }
        files.push(LevelsetEntry {
            iteration: k,
            grid,
            boundary,
            positive_fraction: ls.positive_fraction(),
            boundary_points: ls.boundary.len(),
        });
    }
    let manifest = LevelsetManifest {
        plane: [format!("x{}", plane.axes.0 + 1), format!("x{}", plane.axes.1 + 1)],
        bounds,
        resolution: args.resolution,
        files,
    };
    let mp = b.dir.join("levelset.json");
    write_json_file(&mp, &manifest)?;
    println!("{}", mp.display());
    Ok(EXIT_OK)
}

pub fn cmd_certify(args: &CertifyArgs) -> Result<i32, CliError> {
    let b = ResultBundle::load(&args.bundle)?;
    let triple = b.triple()?;
    let mut tol = b.spec.config.tolerances;
    if let Some(e) = args.eig_tol {
        tol.eig_tol = e;
    }
    if let Some(c) = args.coeff_tol {
        tol.coeff_tol = c;
    }
    if triple.certificates.is_empty() {
        eprintln!("warning: the bundle carries no certificates");
    }
    match check_certificates(&triple, &tol) {
        Ok(r) => {
            println!(
                "{} certificates pass: min eigenvalue {:.3e}, max residual {:.3e}",
                r.checked, r.min_eigenvalue, r.max_residual
            );
            Ok(EXIT_OK)
        }
        Err(e) => {
            eprintln!("{e}");
            Ok(EXIT_FAILURE)
        }
    }
}
