//! Synthesizes a barrier for the scalar plant `x+ = 0.5 x + u`, `|u| <= 1`.

use dtcbf::poly::{parse_polynomial, Monomial, PolyMatrix, VarNames};
use dtcbf::synth::{run_with_observer, InputPolytope, PlantModel, SafeSet, SynthesisConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let names = VarNames::new(1, 1);
    let p = |t: &str| parse_polynomial(t, &names);
    let plant = PlantModel::new(vec![p("0.5*x1")?], PolyMatrix::from_rows(vec![vec![p("1")?]])?)?;
    let input = InputPolytope::from_box(&[-1.0], &[1.0])?;
    let safe = SafeSet::new(p("4 - x1^2")?);
    let mut cfg = SynthesisConfig::new(
        p("1 - x1^2")?,
        Monomial::all_up_to(&[0], 0, 2),
        vec![Monomial::all_up_to(&[0], 0, 1)],
    );
    cfg.max_iters = 10;
    let res = run_with_observer(&plant, &input, &safe, &cfg, &mut |log| {
        println!(
            "k={} gamma0={:?} delta={:?} area_ratio={:?}",
            log.k, log.gamma0, log.delta, log.area_ratio
        );
    })?;
    println!("termination: {:?}", res.termination);
    println!("h = {}", res.triple.h);
    println!("gamma0 = {:.6}", res.triple.gamma0);
    println!("pi = {}", res.triple.pi[0]);
    Ok(())
}
