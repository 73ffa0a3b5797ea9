//! Solves a small mixed-cone SDP with the interior-point solver, writes it
//! in SDPA sparse format and solves the re-read copy.
//!
//! min  x0 + X11 + X22  s.t.  X12 = 1,  x0 - X11 = 0.5,  x0 >= 0,  X >= 0

use dtcbf::sdp::{read_sdpa, solve, write_sdpa, Column, SdpProblem, SolverSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut p = SdpProblem::new();
    p.add_nonneg(1);
    p.add_psd(2);
    let x = |row, col| Column::Psd { block: 0, row, col };
    p.add_row(vec![(x(0, 1), 2.0)], 2.0);
    p.add_row(vec![(Column::NonNeg(0), 1.0), (x(0, 0), -1.0)], 0.5);
    p.objective = vec![(Column::NonNeg(0), 1.0), (x(0, 0), 1.0), (x(1, 1), 1.0)];

    let sol = solve(&p, &SolverSettings::default())?;
    println!("status {:?} after {} iterations", sol.status, sol.iterations);
    println!("primal {:.8}, dual {:.8}", sol.primal_objective, sol.dual_objective);
    println!("X = {:.6}", sol.x_psd[0]);
    println!("x0 = {:.6}, y = {:?}", sol.x_nonneg[0], sol.y);
    println!("residuals {:?}", sol.residuals);

    let text = write_sdpa(&p);
    println!("SDPA:\n{text}");
    let again = solve(&read_sdpa(&text)?, &SolverSettings::default())?;
    println!("re-read objective {:.8}", again.primal_objective);
    Ok(())
}
