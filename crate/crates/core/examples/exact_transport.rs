//! Exact optimal transport between two small distributions.

use otclean::cost::{build_cost_matrix, CostSpec};
use otclean::dist::{Distribution, Schema};
use otclean::ot::exact_ot_lp;

fn main() -> otclean::Result<()> {
    let s = Schema::binary(&["X", "Y"]);
    let p = Distribution::from_weights(s.clone(), vec![2.0, 0.0, 0.0, 2.0])?;
    let q = Distribution::uniform(s.clone());
    let c = build_cost_matrix(&s, &CostSpec::hamming())?;

    let (cost, plan) = exact_ot_lp(&p, &q, &c)?;
    println!("W(p, q) = {cost}");
    for (i, j, m) in plan.nonzero() {
        println!("  {:?} -> {:?}: {m}", s.decode(i), s.decode(j));
    }
    Ok(())
}
