//! Ratio of observational discrimination and statistical distortion of a
//! repair.

use otclean::cost::{build_cost_matrix, CostSpec};
use otclean::dist::{Attribute, Distribution, Schema};
use otclean::repair::{distortion, rod};

fn main() -> otclean::Result<()> {
    let s = Schema::new(vec![
        Attribute::new("hired", vec!["0", "1"]),
        Attribute::new("sex", vec!["f", "m"]),
        Attribute::new("degree", vec!["no", "yes"]),
    ])?;
    let biased = Distribution::from_weights(s.clone(), vec![3.0, 2.0, 2.0, 1.0, 1.0, 1.0, 2.0, 3.0])?;
    let fair = Distribution::from_weights(s.clone(), vec![2.0, 2.0, 2.0, 2.0, 2.0, 1.0, 2.0, 1.0])?;
    for (name, d) in [("biased", &biased), ("fair", &fair)] {
        let (r, log_r) = rod(d, "hired", "sex", &["degree"])?;
        println!("{name}: ROD {r:.3} (log {log_r:.3})");
    }
    let c = build_cost_matrix(&s, &CostSpec::hamming())?;
    println!("distortion {:.4}", distortion(&biased, &fair, &c)?);
    Ok(())
}
