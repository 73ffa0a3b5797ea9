//! Quartic barrier for `x+ = 0.5 x + u` with the shifted input and cascaded
//! bounds on cubic and quartic policy powers.

use dtcbf::poly::{parse_polynomial, Monomial, PolyMatrix, VarNames};
use dtcbf::synth::{run, shift_input, Extension, InputPolytope, PlantModel, SafeSet, SynthesisConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let names = VarNames::new(1, 1);
    let p = |t: &str| parse_polynomial(t, &names);
    let plant = PlantModel::new(vec![p("0.5*x1")?], PolyMatrix::from_rows(vec![vec![p("1")?]])?)?;
    let input = InputPolytope::from_box(&[-1.0], &[1.0])?;
    let safe = SafeSet::new(p("4 - x1^2")?);

    let shifted = shift_input(&plant, &input)?;
    println!("shift c = {:?}, shifted drift f~ = {}", shifted.c, shifted.plant.f[0]);
    println!("shifted input bounds {:?}", shifted.polytope.bounds()?);

    let mut cfg = SynthesisConfig::new(
        p("1 - x1^2")?,
        Monomial::all_up_to(&[0], 0, 4),
        vec![Monomial::all_up_to(&[0], 0, 1)],
    );
    cfg.extension = Extension::Cascaded;
    cfg.max_iters = 5;
    let res = run(&plant, &input, &safe, &cfg)?;
    for up in &res.updates {
        println!("k={} gamma0={:.6} pi~={}", up.k, up.gamma0, up.pi[0]);
        for (alpha, w) in &up.stand_ins {
            println!("  u~^{} <- {w}  ({:?})", alpha.degree(), up.classes[alpha]);
        }
    }
    println!("termination: {:?}", res.termination);
    println!("h = {}", res.triple.h);
    println!("pi = {}", res.triple.pi[0]);
    Ok(())
}
