//! Ground costs between tuples: hamming, euclidean on numeric labels, and
//! attributes frozen so repairs never touch them.

use otclean::cost::{build_cost_matrix, CostSpec};
use otclean::dist::{Attribute, Schema};

fn main() -> otclean::Result<()> {
    let schema = Schema::new(vec![
        Attribute::new("sex", vec!["f", "m"]),
        Attribute::new("income", vec!["10", "20", "40"]),
    ])?;
    let a = schema.encode(&["f", "10"])?;
    let b = schema.encode(&["m", "40"])?;

    let hamming = build_cost_matrix(&schema, &CostSpec::hamming())?;
    println!("hamming  {a} -> {b}: {}", hamming.get(a, b));

    let euclid = build_cost_matrix(&schema, &CostSpec::euclidean())?;
    println!("euclid   {a} -> {b}: {:.3}", euclid.get(a, b));

    let weighted = build_cost_matrix(&schema, &CostSpec::weighted_hamming([("sex", 5.0), ("income", 1.0)]))?;
    println!("weighted {a} -> {b}: {}", weighted.get(a, b));

    let frozen = build_cost_matrix(&schema, &CostSpec::hamming().with_frozen(["sex"]))?;
    println!("frozen   {a} -> {b}: {}", frozen.get(a, b));
    Ok(())
}
