//! Constraints that leave attributes out: repair the marginal on the
//! constrained attributes, then lift the plan back to the full table.

use otclean::cost::{build_cost_matrix, CostSpec};
use otclean::dist::{kl_divergence, CiConstraint, Distribution, Schema};
use otclean::fastotclean::CleanerConfig;
use otclean::ot::{transport_cost, TransportPlan};
use otclean::unsaturated::{build_coupling_greedy, lift_product, repair_unsaturated, Lift, SplitSchema};

fn main() -> otclean::Result<()> {
    let s = Schema::binary(&["X", "Y", "W"]);
    let mut m = vec![0.0; 8];
    m[0b000] = 0.1;
    m[0b110] = 0.1;
    m[0b001] = 0.4;
    m[0b111] = 0.4;
    let p = Distribution::new(s.clone(), m)?;
    let sigma = CiConstraint::new(["X"], ["Y"], Vec::<&str>::new())?;
    let split = SplitSchema::new(&s, &sigma)?;

    // Move a quarter from (0,0) to (0,1) and from (1,1) to (1,0).
    let plan_u = TransportPlan::from_cells(
        split.u.clone(),
        split.u.clone(),
        [(0, 0, 0.25), (0, 1, 0.25), (3, 3, 0.25), (3, 2, 0.25)],
    )?;
    let c = build_cost_matrix(&s, &CostSpec::hamming())?;
    for (name, pi) in [
        ("greedy", build_coupling_greedy(&p, &plan_u, &split)?),
        ("product", lift_product(&p, &plan_u, &split)?),
    ] {
        let q = pi.target()?;
        println!(
            "{name}: cost {:.3}, KL(p, q) {:.4}",
            transport_cost(&pi, &c)?,
            kl_divergence(&p, &q)?
        );
    }

    let c_u = build_cost_matrix(&split.u, &CostSpec::hamming())?;
    let r = repair_unsaturated(&p, &sigma, &c_u, &CleanerConfig::default(), Lift::Product)?;
    println!("solved on (X, Y): full cost {:.4}", transport_cost(&r.plan, &c)?);
    Ok(())
}
