//! Certifies nonnegativity of a polynomial with a Gram matrix and computes
//! its SOS lower bound `max t : p - t SOS`.
//!
//! `cargo run --example sos_check -- "x1^4 + x1^2*x2^2 - 2*x1*x2 + 2"`

use dtcbf::poly::{parse_polynomial, AffineExpr, Monomial, ParamPolynomial, VarNames};
use dtcbf::sdp::InteriorPoint;
use dtcbf::sosir::{Objective, SosProgram, Tolerances};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = std::env::args().nth(1).unwrap_or_else(|| "x1^4 + x1^2*x2^2 - 2*x1*x2 + 2".into());
    let p = parse_polynomial(&text, &VarNames::new(2, 0))?;
    let backend = InteriorPoint::default();
    let tol = Tolerances::default();

    let mut prog = SosProgram::new();
    prog.add_scalar_sos(ParamPolynomial::from_poly(&p), "p");
    match prog.solve(&backend, &tol) {
        Ok(sol) => {
            let cert = sol.certificate("p").expect("certificate for p");
            let check = cert.check();
            println!("{p} is SOS");
            println!("basis: {:?}", cert.bases[0].iter().map(|m| m.to_string()).collect::<Vec<_>>());
            for row in &cert.gram {
                println!("  {}", row.iter().map(|v| format!("{v:9.4}")).collect::<Vec<_>>().join(" "));
            }
            println!(
                "min eigenvalue {:.3e}, reconstruction residual {:.3e}",
                check.min_eigenvalue, check.residual
            );
        }
        Err(e) => println!("{p} is not certified: {e}"),
    }

    let mut prog = SosProgram::new();
    let t = prog.new_var();
    let shifted = ParamPolynomial::from_poly(&p).sub(&ParamPolynomial::linear_combination([(t, Monomial::one())]));
    prog.add_scalar_sos(shifted, "p - t");
    prog.set_objective(Objective::Maximize(AffineExpr::var(t)));
    match prog.solve(&backend, &tol) {
        Ok(sol) => println!("SOS lower bound: {:.6}", sol.value(t)),
        Err(e) => println!("no lower bound: {e}"),
    }
    Ok(())
}
