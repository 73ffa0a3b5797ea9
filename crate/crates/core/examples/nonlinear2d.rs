//! Two-state polynomial plant with a quadratic barrier, maximizing `gamma0`.

use dtcbf::poly::{parse_polynomial, parse_monomial, PolyMatrix, VarNames};
use dtcbf::synth::{run_with_observer, InputPolytope, PlantModel, SafeSet, SynthesisConfig};
use dtcbf::verify::{check_triple, sample_superlevel_set, simulate, summarize_certificates, SamplingSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let names = VarNames::new(2, 2);
    let p = |t: &str| parse_polynomial(t, &names);
    let f = vec![p("x1 + x2")?, p("x1 + 2*x2 + 0.3333333333333333*x1^3")?];
    let g = PolyMatrix::from_rows(vec![
        vec![p("x1^2 + x2 + 1")?, p("0")?],
        vec![p("0")?, p("x2^2 + x1 + 1")?],
    ])?;
    let plant = PlantModel::new(f, g)?;
    let input = InputPolytope::from_box(&[-1.5, -1.5], &[1.5, 1.5])?;
    let safe = SafeSet::new(p("3 - x1^2 - x2^2")?);
    let basis = ["1", "x1", "x2", "x1*x2", "x1^2", "x2^2"]
        .iter()
        .map(|t| parse_monomial(t, &names))
        .collect::<Result<Vec<_>, _>>()?;
    let mut cfg = SynthesisConfig::new(p("0.1 - x1^2 - x2^2")?, basis.clone(), vec![basis.clone(), basis]);
    cfg.degrees.lambda = 4;
    cfg.degrees.omega = 6;
    cfg.degrees.sigma = 2;
    cfg.backoff = 5e-4;
    cfg.max_iters = 200;
    let t = std::time::Instant::now();
    let res = run_with_observer(&plant, &input, &safe, &cfg, &mut |log| {
        println!(
            "k={} gamma0={:?} delta={:?} area_ratio={:?} t1={:.2}s t2={:.2}s",
            log.k, log.gamma0, log.delta, log.area_ratio, log.step1_seconds, log.step2_seconds
        );
    })?;
    println!("termination: {:?} after {:.1}s", res.termination, t.elapsed().as_secs_f64());
    println!("h = {}", res.triple.h);
    println!("area ratio = {:.3}", res.logs.iter().filter_map(|l| l.area_ratio).last().unwrap_or(0.0));
    println!("gamma0 = {:.6}", res.triple.gamma0);
    for (i, pi) in res.triple.pi.iter().enumerate() {
        println!("pi{} = {}", i + 1, pi);
    }

    let spec = SamplingSpec::around_safe_set(&safe, plant.n, 0.2, 1.0);
    let mut report = check_triple(&res.triple, &plant, &input, &safe, &spec)?;
    let x0s = sample_superlevel_set(&res.triple.h, &spec, 1000);
    report.simulation = Some(simulate(&res.triple, &plant, &safe, &x0s, 50, spec.tol).summary);
    report.certificates = Some(summarize_certificates(&res.triple, &cfg.tolerances));
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("verified: {}", report.passes());
    Ok(())
}
