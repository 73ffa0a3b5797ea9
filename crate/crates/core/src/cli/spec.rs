//! TOML problem files.
//!
//! ```toml
//! [plant]
//! n = 2
//! m = 1
//! f = ["x2", "x1 + 0.5*x2"]
//! g = [["0"], ["1"]]
//!
//! [input]          # either M and d, or lower and upper
//! lower = [-1.0]
//! upper = [1.0]
//!
//! [safe]
//! s = "1 - x1^2 - x2^2"
//!
//! [init]
//! h0 = "0.1 - x1^2 - x2^2"
//!
//! [param]          # every field optional
//! H = ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]   # or h_degree = 2
//! Pi = [["1", "x1", "x2"]]                          # or pi_degree = 1
//! degrees = { lambda = 2, omega = 2 }
//! epsilon = 1e-4
//! delta = 1e-4
//! gamma = "maximize"                                # or gamma_target = 0.8
//!
//! [run]            # every field optional
//! max_iters = 100
//! seed = 0
//! extension = "quadratic"                           # cascaded, fixed_policy
//! ```

use std::fmt::Write as _;
use std::ops::Range;

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use crate::poly::{parse_monomial, parse_polynomial, Monomial, PolyMatrix, Polynomial, VarId, VarNames};
use crate::sosir::Tolerances;
use crate::synth::{
    Degrees, Extension, GammaObjective, InputPolytope, InputShift, PlantModel, SafeSet, SynthError,
    SynthesisConfig,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}{message}", .line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Semantic { line: Option<usize>, message: String },
    #[error("{0}")]
    Io(String),
}

/// A parsed problem: plant, input set, safe set and synthesis settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub plant: PlantModel,
    pub input: InputPolytope,
    pub safe: SafeSet,
    pub config: SynthesisConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    plant: Option<Spanned<RawPlant>>,
    input: Option<Spanned<RawInput>>,
    safe: Option<RawSafe>,
    init: Option<RawInit>,
    #[serde(default)]
    param: RawParam,
    #[serde(default)]
    run: RawRun,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    n: usize,
    m: usize,
    f: Spanned<Vec<Spanned<String>>>,
    g: Spanned<Vec<Vec<Spanned<String>>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInput {
    #[serde(rename = "M")]
    m: Option<Vec<Vec<f64>>>,
    d: Option<Vec<f64>>,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSafe {
    s: Spanned<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInit {
    h0: Spanned<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawParam {
    #[serde(rename = "H")]
    h: Option<Vec<Spanned<String>>>,
    h_degree: Option<u32>,
    #[serde(rename = "Pi")]
    pi: Option<Spanned<Vec<Vec<Spanned<String>>>>>,
    pi_degree: Option<u32>,
    degrees: Option<Degrees>,
    epsilon: Option<f64>,
    delta: Option<f64>,
    delta_max: Option<f64>,
    backoff: Option<f64>,
    gamma: Option<Spanned<String>>,
    gamma_target: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawShift {
    Mode(String),
    Fixed(Vec<f64>),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRun {
    max_iters: Option<usize>,
    seed: Option<u64>,
    extension: Option<Extension>,
    input_shift: Option<Spanned<RawShift>>,
    reduce_state: Option<bool>,
    area_samples: Option<usize>,
    tolerances: Option<Tolerances>,
}

/// Maps byte offsets to 1-based line and column.
struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn at(&self, offset: usize) -> (usize, usize) {
        let before = &self.0[..offset.min(self.0.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.rfind('\n').map(|i| before.len() - i).unwrap_or(before.len() + 1);
        (line, column)
    }

    fn parse_err(&self, span: Range<usize>, message: impl Into<String>) -> SpecError {
        let (line, column) = self.at(span.start);
        SpecError::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    fn semantic(&self, span: Option<Range<usize>>, message: impl Into<String>) -> SpecError {
        SpecError::Semantic {
            line: span.map(|s| self.at(s.start).0),
            message: message.into(),
        }
    }

    fn poly(&self, text: &Spanned<String>, names: &VarNames, what: &str) -> Result<Polynomial, SpecError> {
        parse_polynomial(text.get_ref(), names).map_err(|e| self.parse_err(text.span(), format!("{what}: {e}")))
    }

    fn monomials(&self, items: &[Spanned<String>], names: &VarNames, what: &str) -> Result<Vec<Monomial>, SpecError> {
        items
            .iter()
            .map(|t| parse_monomial(t.get_ref(), names).map_err(|e| self.parse_err(t.span(), format!("{what}: {e}"))))
            .collect()
    }
}

fn state_names(n: usize) -> VarNames {
    VarNames::new(n, 0)
}

/// Parses a problem file from text.
pub fn parse_spec_str(text: &str) -> Result<ProblemSpec, SpecError> {
    let lines = Lines(text);
    let raw: RawSpec = toml::from_str(text).map_err(|e| {
        let span = e.span().unwrap_or(0..0);
        lines.parse_err(span, e.message().to_string())
    })?;
    let missing = |section: &str| SpecError::Parse {
        line: 1,
        column: 1,
        message: format!("missing [{section}] section"),
    };
    let plant_raw = raw.plant.ok_or_else(|| missing("plant"))?;
    let plant_span = plant_raw.span();
    let plant_raw = plant_raw.into_inner();
    let input_raw = raw.input.ok_or_else(|| missing("input"))?;
    let safe_raw = raw.safe.ok_or_else(|| missing("safe"))?;
    let init_raw = raw.init.ok_or_else(|| missing("init"))?;
    let (n, m) = (plant_raw.n, plant_raw.m);
    let names = state_names(n);

    if plant_raw.f.get_ref().len() != n {
        return Err(lines.semantic(
            Some(plant_raw.f.span()),
            format!("f has {} entries but n = {n}", plant_raw.f.get_ref().len()),
        ));
    }
    let f = plant_raw
        .f
        .get_ref()
        .iter()
        .map(|t| lines.poly(t, &names, "f"))
        .collect::<Result<Vec<_>, _>>()?;
    let g_rows = plant_raw.g.get_ref();
    if g_rows.len() != n || g_rows.iter().any(|r| r.len() != m) {
        let shape: Vec<usize> = g_rows.iter().map(Vec::len).collect();
        return Err(lines.semantic(
            Some(plant_raw.g.span()),
            format!("g must be {n} x {m}, found row lengths {shape:?}"),
        ));
    }
    let g = g_rows
        .iter()
        .map(|r| r.iter().map(|t| lines.poly(t, &names, "g")).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    let g = PolyMatrix::from_rows(g).map_err(|e| lines.semantic(Some(plant_span.clone()), e.to_string()))?;
    let plant = PlantModel::new(f, g).map_err(|e| lines.semantic(Some(plant_span.clone()), e.to_string()))?;

    let input_span = input_raw.span();
    let input_raw = input_raw.into_inner();
    let input = match (input_raw.m, input_raw.d, input_raw.lower, input_raw.upper) {
        (Some(rows), Some(d), None, None) => {
            if rows.iter().any(|r| r.len() != m) {
                return Err(lines.semantic(Some(input_span), format!("every row of M needs {m} entries")));
            }
            InputPolytope::new(rows, d)
        }
        (None, None, Some(lo), Some(hi)) => {
            if lo.len() != m || hi.len() != m {
                return Err(lines.semantic(Some(input_span), format!("lower and upper need {m} entries")));
            }
            InputPolytope::from_box(&lo, &hi)
        }
        _ => {
            return Err(lines.semantic(
                Some(input_span),
                "[input] needs either M and d or lower and upper",
            ))
        }
    }
    .map_err(|e| match e {
        SynthError::InfeasibleInput => lines.semantic(Some(input_span.clone()), "the input polytope is empty"),
        other => lines.semantic(Some(input_span.clone()), other.to_string()),
    })?;

    let safe = SafeSet::new(lines.poly(&safe_raw.s, &names, "s")?);
    let h0 = lines.poly(&init_raw.h0, &names, "h0")?;

    let p = raw.param;
    let vars: Vec<VarId> = (0..n as VarId).collect();
    let even_deg = h0.degree().max(2).div_ceil(2) * 2;
    let h_basis = match (&p.h, p.h_degree) {
        (Some(list), None) => lines.monomials(list, &names, "H")?,
        (None, d) => Monomial::all_up_to(&vars, 0, d.unwrap_or(even_deg)),
        (Some(list), Some(_)) => {
            return Err(lines.semantic(list.first().map(Spanned::span), "give either H or h_degree, not both"))
        }
    };
    let pi_bases = match (&p.pi, p.pi_degree) {
        (Some(lists), None) => {
            if lists.get_ref().len() != m {
                return Err(lines.semantic(Some(lists.span()), format!("Pi needs {m} bases")));
            }
            lists
                .get_ref()
                .iter()
                .map(|b| lines.monomials(b, &names, "Pi"))
                .collect::<Result<Vec<_>, _>>()?
        }
        (None, d) => vec![Monomial::all_up_to(&vars, 0, d.unwrap_or(even_deg)); m],
        (Some(lists), Some(_)) => {
            return Err(lines.semantic(Some(lists.span()), "give either Pi or pi_degree, not both"))
        }
    };

    let mut config = SynthesisConfig::new(h0, h_basis, pi_bases);
    if let Some(d) = p.degrees {
        config.degrees = d;
    }
    config.epsilon = p.epsilon.unwrap_or(config.epsilon);
    config.delta = p.delta.unwrap_or(config.delta);
    config.delta_max = p.delta_max.unwrap_or(config.delta_max);
    config.backoff = p.backoff.unwrap_or(config.backoff);
    config.gamma = match (&p.gamma, p.gamma_target) {
        (None, None) => GammaObjective::Maximize,
        (None, Some(t)) => GammaObjective::Target(t),
        (Some(g), None) if g.get_ref() == "maximize" => GammaObjective::Maximize,
        (Some(g), None) => {
            return Err(lines.parse_err(g.span(), format!("unknown gamma objective `{}`", g.get_ref())))
        }
        (Some(g), Some(_)) => {
            return Err(lines.semantic(Some(g.span()), "give either gamma or gamma_target, not both"))
        }
    };

    let r = raw.run;
    config.max_iters = r.max_iters.unwrap_or(config.max_iters);
    config.seed = r.seed.unwrap_or(config.seed);
    config.extension = r.extension.unwrap_or(config.extension);
    config.reduce_state = r.reduce_state.unwrap_or(config.reduce_state);
    config.area_samples = r.area_samples.unwrap_or(config.area_samples);
    config.tolerances = r.tolerances.unwrap_or(config.tolerances);
    config.input_shift = match r.input_shift {
        None => InputShift::Auto,
        Some(s) => {
            let span = s.span();
            match s.into_inner() {
                RawShift::Fixed(c) => InputShift::Fixed(c),
                RawShift::Mode(m) if m == "auto" => InputShift::Auto,
                RawShift::Mode(m) => return Err(lines.parse_err(span, format!("unknown input shift `{m}`"))),
            }
        }
    };
    config
        .validate(&plant)
        .map_err(|e| lines.semantic(None, e.to_string()))?;
    Ok(ProblemSpec {
        plant,
        input,
        safe,
        config,
    })
}

/// Reads and parses a problem file.
pub fn parse_spec(path: &std::path::Path) -> Result<ProblemSpec, SpecError> {
    let text = std::fs::read_to_string(path).map_err(|e| SpecError::Io(format!("{}: {e}", path.display())))?;
    parse_spec_str(&text)
}

fn quoted(items: impl IntoIterator<Item = String>) -> String {
    let v: Vec<String> = items.into_iter().map(|s| format!("\"{s}\"")).collect();
    format!("[{}]", v.join(", "))
}

fn numbers(items: &[f64]) -> String {
    let v: Vec<String> = items.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", v.join(", "))
}

impl ProblemSpec {
    /// Writes the problem in the file format read by [`parse_spec_str`];
    /// parsing the output gives back an equal problem.
    pub fn to_toml(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(out, "[plant]\nn = {}\nm = {}", self.plant.n, self.plant.m);
        let _ = writeln!(out, "f = {}", quoted(self.plant.f.iter().map(|p| p.to_string())));
        let rows: Vec<String> = (0..self.plant.n)
            .map(|i| quoted((0..self.plant.m).map(|j| self.plant.g.get(i, j).to_string())))
            .collect();
        let _ = writeln!(out, "g = [{}]", rows.join(", "));
        let rows: Vec<String> = self.input.m_rows.iter().map(|r| numbers(r)).collect();
        let _ = writeln!(out, "\n[input]\nM = [{}]\nd = {}", rows.join(", "), numbers(&self.input.d));
        let _ = writeln!(out, "\n[safe]\ns = \"{}\"", self.safe.s);
        let _ = writeln!(out, "\n[init]\nh0 = \"{}\"", c.h0);
        let _ = writeln!(out, "\n[param]\nH = {}", quoted(c.h_basis.iter().map(|m| m.to_string())));
        let bases: Vec<String> = c.pi_bases.iter().map(|b| quoted(b.iter().map(|m| m.to_string()))).collect();
        let _ = writeln!(out, "Pi = [{}]", bases.join(", "));
        let d = &c.degrees;
        let _ = write!(
            out,
            "degrees = {{ lambda = {}, omega = {}, phi = {}, psi = {}, big_xi = {}, sigma = {}, xi = {}, eta = {}, sigma_tilde = {}",
            d.lambda, d.omega, d.phi, d.psi, d.big_xi, d.sigma, d.xi, d.eta, d.sigma_tilde
        );
        if let Some(t) = d.pi_tilde {
            let _ = write!(out, ", pi_tilde = {t}");
        }
        let _ = writeln!(out, " }}");
        let _ = writeln!(
            out,
            "epsilon = {:?}\ndelta = {:?}\ndelta_max = {:?}\nbackoff = {:?}",
            c.epsilon, c.delta, c.delta_max, c.backoff
        );
        match c.gamma {
            GammaObjective::Maximize => {
                let _ = writeln!(out, "gamma = \"maximize\"");
            }
            GammaObjective::Target(t) => {
                let _ = writeln!(out, "gamma_target = {t:?}");
            }
        }
        let ext = match c.extension {
            Extension::Quadratic => "quadratic",
            Extension::Cascaded => "cascaded",
            Extension::FixedPolicy => "fixed_policy",
        };
        let _ = writeln!(
            out,
            "\n[run]\nmax_iters = {}\nseed = {}\nextension = \"{ext}\"\nreduce_state = {}\narea_samples = {}",
            c.max_iters, c.seed, c.reduce_state, c.area_samples
        );
        match &c.input_shift {
            InputShift::Auto => {
                let _ = writeln!(out, "input_shift = \"auto\"");
            }
            InputShift::Fixed(v) => {
                let _ = writeln!(out, "input_shift = {}", numbers(v));
            }
        }
        let _ = writeln!(
            out,
            "tolerances = {{ eig_tol = {:?}, coeff_tol = {:?} }}",
            c.tolerances.eig_tol, c.tolerances.coeff_tol
        );
        out
    }
}
