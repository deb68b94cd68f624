//! Turning a plan into a probabilistic cleaner and resampling a dataset
//! with it.

use otclean::dist::{cmi, CiConstraint, Distribution, Schema};
use otclean::ot::TransportPlan;
use otclean::repair::{apply_cleaner, cleaner_from_plan, ProbabilisticCleaner};

fn main() -> otclean::Result<()> {
    let s = Schema::binary(&["X", "Y", "Z"]);
    let i = |t: [&str; 3]| s.encode(&t).unwrap();
    let plan = TransportPlan::from_cells(
        s.clone(),
        s.clone(),
        [
            (i(["1", "0", "0"]), i(["1", "0", "0"]), 0.25),
            (i(["1", "0", "1"]), i(["1", "0", "1"]), 0.25),
            (i(["1", "1", "0"]), i(["1", "1", "0"]), 0.25),
            (i(["1", "1", "0"]), i(["1", "1", "1"]), 0.25),
        ],
    )?;
    let cleaner = cleaner_from_plan(&plan)?;
    let json = cleaner.to_json()?;
    println!("{json}");
    let cleaner = ProbabilisticCleaner::from_json(&json, s.clone())?;

    let base = [["1", "0", "0"], ["1", "0", "1"], ["1", "1", "0"], ["1", "1", "0"]];
    let data: Vec<[&str; 3]> = (0..1000).flat_map(|_| base).collect();
    let repaired = apply_cleaner(&data, &cleaner, 7)?;
    let sigma = CiConstraint::new(["Y"], ["Z"], Vec::<&str>::new())?;
    println!(
        "cmi before {:.4}, after {:.4}",
        cmi(&Distribution::empirical(&data, s.clone())?, &sigma)?,
        cmi(&Distribution::empirical(&repaired, s)?, &sigma)?
    );
    Ok(())
}
