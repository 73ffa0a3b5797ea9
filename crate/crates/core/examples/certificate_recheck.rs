//! Stores the Gram certificates of a synthesized triple as JSON, reloads
//! them and checks them again, then shows a tampered copy being rejected.

use dtcbf::poly::{parse_polynomial, Monomial, PolyMatrix, VarNames};
use dtcbf::sosir::{Certificate, Tolerances};
use dtcbf::synth::{run, InputPolytope, PlantModel, SafeSet, SynthesisConfig};
use dtcbf::verify::check_certificates;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let names = VarNames::new(1, 1);
    let p = |t: &str| parse_polynomial(t, &names);
    let plant = PlantModel::new(vec![p("0.5*x1")?], PolyMatrix::from_rows(vec![vec![p("1")?]])?)?;
    let input = InputPolytope::from_box(&[-1.0], &[1.0])?;
    let safe = SafeSet::new(p("4 - x1^2")?);
    let cfg = SynthesisConfig::new(
        p("1 - x1^2")?,
        Monomial::all_up_to(&[0], 0, 2),
        vec![Monomial::all_up_to(&[0], 0, 1)],
    );
    let mut triple = run(&plant, &input, &safe, &cfg)?.triple;

    let json = serde_json::to_string(&triple.certificates)?;
    triple.certificates = serde_json::from_str::<Vec<Certificate>>(&json)?;
    let tol = Tolerances::default();
    let report = check_certificates(&triple, &tol)?;
    println!(
        "{} certificates ({} bytes of JSON): min eigenvalue {:.3e}, max residual {:.3e}",
        report.checked,
        json.len(),
        report.min_eigenvalue,
        report.max_residual
    );
    for c in &triple.certificates {
        let check = c.check();
        println!("  {:<24} size {:>2}  min eig {:.2e}", c.label, c.gram.len(), check.min_eigenvalue);
    }

    if let Some(c) = triple.certificates.first_mut() {
        c.gram[0][0] -= 1.0;
    }
    match check_certificates(&triple, &tol) {
        Ok(_) => println!("tampered certificate accepted"),
        Err(e) => println!("tampered certificate rejected: {e}"),
    }
    Ok(())
}
