//! Making a distribution satisfy X ⫫ Y | Z with rank-one KL factorization
//! of every Z-slice.

use otclean::ci_project::{project_to_ci, rank1_kl_nmf, NmfOptions};
use otclean::dist::{cmi, CiConstraint, Distribution, Schema};

fn main() -> otclean::Result<()> {
    let m = [0.3, 0.1, 0.1, 0.5];
    let out = rank1_kl_nmf(&m, 2, 2, &NmfOptions::default())?;
    println!("w = {:?}, h = {:?}", out.factors.w, out.factors.h);
    println!("w·hᵀ = {:?}", out.factors.outer());

    let s = Schema::binary(&["X", "Y", "Z"]);
    let p = Distribution::from_weights(s, vec![4.0, 1.0, 1.0, 4.0, 1.0, 2.0, 3.0, 4.0])?;
    let sigma = CiConstraint::new(["X"], ["Y"], ["Z"])?;
    let q = project_to_ci(&p, &sigma)?;
    println!("cmi before {:.4}, after {:.1e}", cmi(&p, &sigma)?, cmi(&q, &sigma)?);
    Ok(())
}
