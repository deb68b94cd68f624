//! Reading a CSV with a numeric column, binning it, and writing a repaired
//! copy.

use otclean::cost::{build_cost_matrix, CostSpec};
use otclean::dist::CiConstraint;
use otclean::fastotclean::{fast_otclean, CleanerConfig};
use otclean::io::Dataset;
use otclean::repair::{apply_cleaner_indices, cleaner_from_plan};

const CSV: &str = "\
group,score,passed
a,51,yes
a,62,yes
b,45,no
b,90,yes
a,70,no
b,38,no
a,88,yes
b,55,no
";

fn main() -> otclean::Result<()> {
    let mut data = Dataset::from_reader(CSV.as_bytes())?;
    println!("binned {:?}", data.bin_numeric(2)?);
    let schema = data.infer_schema(None)?;
    let p = data.empirical(&schema)?;

    let sigma = CiConstraint::new(["group"], ["passed"], ["score"])?;
    let c = build_cost_matrix(&schema, &CostSpec::hamming().with_frozen(["score"]))?;
    let r = fast_otclean(&p, &c, &sigma, &CleanerConfig::default())?;
    let cleaner = cleaner_from_plan(&r.plan)?;
    let repaired = apply_cleaner_indices(&data.encode(&schema)?, &cleaner, 1)?;
    Dataset::from_indices(&schema, &repaired).write_to(std::io::stdout().lock())
}
