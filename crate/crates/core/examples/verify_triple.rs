//! Checks a hand-written triple by sampling, closed-loop simulation and a
//! level-set grid, without running synthesis.
//!
//! Plant `x+ = 0.5 x + u` on two states, `|u_i| <= 1`,
//! `h = 1 - x1^2 - x2^2`, `gamma0 = 0.75`, `pi = -0.2 x`.

use std::collections::BTreeMap;

use dtcbf::poly::{parse_polynomial, PolyMatrix, VarNames};
use dtcbf::synth::{DtcbfTriple, InputPolytope, PlantModel, SafeSet};
use dtcbf::verify::{check_triple, levelset_sample, point_values, sample_superlevel_set, simulate, Plane, SamplingSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let names = VarNames::new(2, 2);
    let p = |t: &str| parse_polynomial(t, &names);
    let plant = PlantModel::new(
        vec![p("0.5*x1")?, p("0.5*x2")?],
        PolyMatrix::from_rows(vec![vec![p("1")?, p("0")?], vec![p("0")?, p("1")?]])?,
    )?;
    let input = InputPolytope::from_box(&[-1.0, -1.0], &[1.0, 1.0])?;
    let safe = SafeSet::new(p("4 - x1^2 - x2^2")?);
    let triple = DtcbfTriple {
        h: p("1 - x1^2 - x2^2")?,
        gamma0: 0.75,
        pi: vec![p("-0.2*x1")?, p("-0.2*x2")?],
        certificates: Vec::new(),
        multipliers: BTreeMap::new(),
    };

    let mut spec = SamplingSpec::new(vec![(-2.5, 2.5); 2]);
    spec.samples = 20_000;
    let mut report = check_triple(&triple, &plant, &input, &safe, &spec)?;
    let x0s = sample_superlevel_set(&triple.h, &spec, 200);
    let sim = simulate(&triple, &plant, &safe, &x0s, 30, spec.tol);
    report.simulation = Some(sim.summary.clone());
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("verified: {}", report.passes());
    println!("values at (0.6, 0.6): {:?}", point_values(&triple, &plant, &input, &safe, &[0.6, 0.6]));
    println!("trajectory from {:?}: {:?}", x0s[0], sim.trajectories[0].states.last());

    let ls = levelset_sample(&triple.h, &Plane::through_origin(2, 0, 1)?, [(-1.5, 1.5), (-1.5, 1.5)], 41)?;
    println!(
        "level set: {} boundary points, {:.3} of the grid inside C",
        ls.boundary.len(),
        ls.positive_fraction()
    );
    print!("{}", ls.boundary_csv().lines().take(6).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}
