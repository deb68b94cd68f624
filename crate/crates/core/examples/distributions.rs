//! Joint distributions over a discrete schema and the information measures
//! used to score conditional independence.

use otclean::dist::{cmi, entropy, kl_divergence, Attribute, CiConstraint, Distribution, Schema};

fn main() -> otclean::Result<()> {
    let schema = Schema::new(vec![
        Attribute::new("smoker", vec!["no", "yes"]),
        Attribute::new("cough", vec!["no", "yes"]),
        Attribute::new("age", vec!["young", "old"]),
    ])?;
    let rows = [
        ["no", "no", "young"],
        ["no", "yes", "old"],
        ["yes", "yes", "old"],
        ["yes", "yes", "young"],
        ["no", "no", "old"],
    ];
    let p = Distribution::empirical(&rows, schema.clone())?;
    println!("P(yes, yes, old) = {}", p.prob(&["yes", "yes", "old"])?);

    let by_age = p.marginalize(&["age"])?;
    println!("P(age) = {:?}", by_age.mass());

    let sigma = CiConstraint::new(["smoker"], ["cough"], ["age"])?;
    println!("I(smoker; cough | age) = {:.4} nats", cmi(&p, &sigma)?);
    println!("H(P) = {:.4} nats", entropy(&p));

    let u = Distribution::uniform(schema);
    println!("KL(P || uniform) = {:.4}", kl_divergence(&p, &u)?);
    println!("KL(uniform || P) = {}", kl_divergence(&u, &p)?);
    Ok(())
}
