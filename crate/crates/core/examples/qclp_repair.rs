//! The exact formulation: transport plus bilinear independence constraints,
//! solved by alternating linearization.

use otclean::ci_project::project_to_ci;
use otclean::cost::{build_cost_matrix, CostSpec};
use otclean::dist::{CiConstraint, Distribution, Schema};
use otclean::qclp::{build_qclp, solve_qclp_alternating};

fn main() -> otclean::Result<()> {
    let s = Schema::binary(&["X", "Y", "Z"]);
    let rows = [["1", "0", "0"], ["1", "0", "1"], ["1", "1", "0"], ["1", "1", "0"]];
    let p = Distribution::empirical(&rows, s.clone())?;
    let sigma = CiConstraint::new(["Y"], ["Z"], Vec::<&str>::new())?;
    let prog = build_qclp(&p, &build_cost_matrix(&s, &CostSpec::hamming())?, &sigma)?;
    println!(
        "{} variables: {} validity, {} marginal, {} independence constraints",
        prog.n_vars(),
        prog.validity_count(),
        prog.marginal_count(),
        prog.independence_count()
    );

    let r = solve_qclp_alternating(&prog, &project_to_ci(&p, &sigma)?, 50, 1e-9)?;
    println!("costs per step {:?}", r.costs);
    println!("final cost {:.4}, converged {}", r.final_cost(), r.converged);
    for (i, j, m) in r.plan.nonzero() {
        println!("  {:?} -> {:?}: {m:.4}", s.decode(i), s.decode(j));
    }
    Ok(())
}
