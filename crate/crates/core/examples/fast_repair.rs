//! Repairing a tiny dataset so Y ⫫ Z holds, with the regularized
//! alternating solver, and dumping its trace.

use otclean::cost::{build_cost_matrix, CostSpec};
use otclean::dist::{cmi, CiConstraint, Distribution, Schema};
use otclean::fastotclean::{fast_otclean, CleanerConfig};

fn main() -> otclean::Result<()> {
    let s = Schema::binary(&["X", "Y", "Z"]);
    let rows = [["1", "0", "0"], ["1", "0", "1"], ["1", "1", "0"], ["1", "1", "0"]];
    let p = Distribution::empirical(&rows, s.clone())?;
    let sigma = CiConstraint::new(["Y"], ["Z"], Vec::<&str>::new())?;
    let c = build_cost_matrix(&s, &CostSpec::hamming())?;

    let cfg = CleanerConfig {
        outer_max: 2000,
        ..CleanerConfig::default()
    };
    let r = fast_otclean(&p, &c, &sigma, &cfg)?;
    println!(
        "{} outer iterations, {} inner, converged {}",
        r.outer_iterations(),
        r.sinkhorn_iterations(),
        r.converged
    );
    println!("cost {:.4}, cmi {:.1e}", r.final_cost(), cmi(&r.target, &sigma)?);
    for (i, m) in r.target.mass().iter().enumerate().filter(|(_, m)| **m > 1e-6) {
        println!("  Q{:?} = {m:.4}", s.decode(i));
    }
    let mut tail = Vec::new();
    r.write_trace(&mut tail)?;
    let text = String::from_utf8_lossy(&tail);
    println!("last trace record: {}", text.lines().last().unwrap_or(""));
    Ok(())
}
