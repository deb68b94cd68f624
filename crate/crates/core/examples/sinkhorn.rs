//! Entropic transport with exact and KL-relaxed marginals, and reuse of
//! one solver across targets with warm starts.

use otclean::cost::{build_cost_matrix, CostSpec};
use otclean::dist::{Distribution, Schema};
use otclean::ot::{exact_ot_lp, transport_cost, EntropicSolver, SolverParams};

fn main() -> otclean::Result<()> {
    let s = Schema::binary(&["A", "B", "C"]);
    let p = Distribution::from_weights(s.clone(), (1..=8).map(f64::from).collect())?;
    let q = Distribution::from_weights(s.clone(), (1..=8).rev().map(f64::from).collect())?;
    let c = build_cost_matrix(&s, &CostSpec::hamming())?;

    let solver = EntropicSolver::new(&p, &c, SolverParams::default())?;
    let exact = solver.solve(&q, None)?;
    let (lp, _) = exact_ot_lp(&p, &q, &c)?;
    println!(
        "balanced: cost {:.6} (LP {lp:.6}), {} iterations",
        transport_cost(&exact.plan, &c)?,
        exact.iterations
    );

    let relaxed = solver.solve_relaxed(&q, None)?;
    println!(
        "relaxed:  cost {:.6}, {} iterations, converged {}",
        transport_cost(&relaxed.plan, &c)?,
        relaxed.iterations,
        relaxed.converged
    );

    let nearby = Distribution::from_weights(s, (1..=8).rev().map(|x| f64::from(x) + 0.1).collect())?;
    let cold = solver.solve_relaxed(&nearby, None)?;
    let warm = solver.solve_relaxed(&nearby, Some(&relaxed.state))?;
    println!("nearby target: cold {} vs warm {} iterations", cold.iterations, warm.iterations);
    Ok(())
}
