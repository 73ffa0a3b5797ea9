//! Linearized cart-pole with a quartic barrier, `gamma0` pulled toward 0.8.

use dtcbf::poly::{parse_polynomial, Monomial, PolyMatrix, VarNames};
use dtcbf::synth::{
    run_with_observer, Extension, GammaObjective, InputPolytope, PlantModel, SafeSet, SynthesisConfig,
};
use dtcbf::verify::{check_triple, sample_superlevel_set, simulate, summarize_certificates, SamplingSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // x1 = cart position, x2 = cart velocity, x3 = angle, x4 = angular velocity
    let names = VarNames::new(4, 1);
    let p = |t: &str| parse_polynomial(t, &names);
    let f = vec![p("x2")?, p("-0.98*x3")?, p("x4")?, p("10.78*x3")?];
    let g = PolyMatrix::from_rows(vec![vec![p("0")?], vec![p("1")?], vec![p("0")?], vec![p("-1")?]])?;
    let plant = PlantModel::new(f, g)?;
    let input = InputPolytope::from_box(&[-5.0], &[5.0])?;
    let safe = SafeSet::new(p("0.3947841760435743 - x3^2 - x4^2")?);
    let vars = [0, 1, 2, 3];
    let mut cfg = SynthesisConfig::new(
        p("0.04 - x3^2 - x4^2")?,
        Monomial::all_up_to(&vars, 0, 4),
        vec![Monomial::all_up_to(&vars, 0, 3)],
    );
    cfg.extension = Extension::FixedPolicy;
    cfg.gamma = GammaObjective::Target(0.8);
    let t = std::time::Instant::now();
    let res = run_with_observer(&plant, &input, &safe, &cfg, &mut |log| {
        println!(
            "k={} {:?}/{:?} gamma0={:?} delta={:?} area_ratio={:?} t1={:.2}s t2={:.2}s",
            log.k, log.step1, log.step2, log.gamma0, log.delta, log.area_ratio, log.step1_seconds, log.step2_seconds
        );
    })?;
    println!("termination: {:?} after {:.1}s", res.termination, t.elapsed().as_secs_f64());
    println!("h = {}", res.triple.h);
    println!("gamma0 = {:.6}", res.triple.gamma0);
    println!("pi = {}", res.triple.pi[0]);

    let spec = SamplingSpec::around_safe_set(&safe, plant.n, 0.2, 1.0);
    let mut report = check_triple(&res.triple, &plant, &input, &safe, &spec)?;
    let x0s = sample_superlevel_set(&res.triple.h, &spec, 1000);
    report.simulation = Some(simulate(&res.triple, &plant, &safe, &x0s, 50, spec.tol).summary);
    report.certificates = Some(summarize_certificates(&res.triple, &cfg.tolerances));
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("verified: {}", report.passes());
    Ok(())
}
