//! Turning a transport plan into a per-tuple sampler, applying it, and the
//! metrics used to judge a repair.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::CostMatrix;
use crate::dist::{Distribution, Schema};
use crate::error::{Error, Result};
use crate::ot::{exact_ot_lp, TransportPlan};

/// `π(v' | v)` for every source tuple with positive mass.
///
/// Rows list `(destination, probability)` pairs by ascending destination.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilisticCleaner {
    schema: Schema,
    rows: BTreeMap<usize, Vec<(usize, f64)>>,
}

#[derive(Serialize, Deserialize)]
struct CleanerJson {
    schema_hash: String,
    rows: BTreeMap<usize, Vec<(usize, f64)>>,
}

impl ProbabilisticCleaner {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn row(&self, src: usize) -> Option<&[(usize, f64)]> {
        self.rows.get(&src).map(Vec::as_slice)
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &[(usize, f64)])> {
        self.rows.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Rebuilds a plan by weighting each row with `source`.
    pub fn reconstitute(&self, source: &Distribution) -> Result<TransportPlan> {
        let cells = self
            .rows
            .iter()
            .flat_map(|(&i, row)| row.iter().map(move |&(j, pr)| (i, j, pr * source.mass()[i])));
        TransportPlan::from_cells(self.schema.clone(), self.schema.clone(), cells)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CleanerJson {
            schema_hash: self.schema.fingerprint(),
            rows: self.rows.clone(),
        })?)
    }

    pub fn from_json(text: &str, schema: Schema) -> Result<Self> {
        let doc: CleanerJson = serde_json::from_str(text)?;
        if doc.schema_hash != schema.fingerprint() {
            return Err(Error::Validation(format!(
                "cleaner was written for schema {}, data has schema {}",
                doc.schema_hash,
                schema.fingerprint()
            )));
        }
        let n = schema.size();
        for (src, row) in &doc.rows {
            let total: f64 = row.iter().map(|(_, p)| p).sum();
            if *src >= n || row.iter().any(|&(j, p)| j >= n || !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!("cleaner row {src} is malformed")));
            }
        }
        Ok(Self {
            schema,
            rows: doc.rows,
        })
    }
}

/// Row `v` is `plan(v, ·)` divided by the plan's source mass at `v`.
pub fn cleaner_from_plan(plan: &TransportPlan) -> Result<ProbabilisticCleaner> {
    if plan.src_schema() != plan.dst_schema() {
        return Err(Error::Shape("a cleaner maps a schema to itself".into()));
    }
    let rows = (0..plan.rows())
        .filter_map(|i| {
            let row = plan.row(i);
            let total: f64 = row.iter().sum();
            (total > 0.0).then(|| {
                let entries = row
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| **m > 0.0)
                    .map(|(j, m)| (j, m / total))
                    .collect();
                (i, entries)
            })
        })
        .collect();
    Ok(ProbabilisticCleaner {
        schema: plan.src_schema().clone(),
        rows,
    })
}

/// Resamples every encoded tuple from its cleaner row.
///
/// Draws come from ChaCha8 seeded with `seed`, one uniform per tuple in
/// order, mapped through the row's cumulative probabilities.
pub fn apply_cleaner_indices(dataset: &[usize], cleaner: &ProbabilisticCleaner, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dataset
        .iter()
        .map(|&i| {
            let row = cleaner.row(i).ok_or_else(|| {
                let tuple = if i < cleaner.schema.size() {
                    cleaner.schema.decode(i).join(",")
                } else {
                    format!("#{i}")
                };
                Error::Coverage(format!("({tuple})"))
            })?;
            let r: f64 = rng.random();
            let mut acc = 0.0;
            for &(j, p) in row {
                acc += p;
                if r < acc {
                    return Ok(j);
                }
            }
            Ok(row.last().map_or(i, |e| e.0))
        })
        .collect()
}

/// Labelled form of [`apply_cleaner_indices`]; row count and order are kept.
pub fn apply_cleaner<T, S>(dataset: &[T], cleaner: &ProbabilisticCleaner, seed: u64) -> Result<Vec<Vec<String>>>
where
    T: AsRef<[S]>,
    S: AsRef<str>,
{
    let schema = &cleaner.schema;
    let encoded = dataset
        .iter()
        .map(|t| schema.encode(t.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(apply_cleaner_indices(&encoded, cleaner, seed)?
        .into_iter()
        .map(|j| schema.decode(j).into_iter().map(String::from).collect())
        .collect())
}

/// Earth mover distance between `p` and `q` under `cost`.
pub fn distortion(p: &Distribution, q: &Distribution, cost: &CostMatrix) -> Result<f64> {
    if p.schema() != q.schema() {
        return Err(Error::Shape("distributions are over different schemas".into()));
    }
    Ok(exact_ot_lp(p, q, cost)?.0)
}

/// Code treated as "1": the label `1` when present, else the second label.
fn positive_code(schema: &Schema, name: &str) -> Result<usize> {
    let attr = &schema.attributes()[schema.position(name)?];
    if attr.len() != 2 {
        return Err(Error::Validation(format!(
            "`{name}` must be binary, it has {} values",
            attr.len()
        )));
    }
    Ok(attr.code_of("1").unwrap_or(1))
}

/// Ratio of observational discrimination and its logarithm.
///
/// Averages, over the values of `a` with positive mass, the odds ratio
/// `P(Ŷ=1|S=0,a) P(Ŷ=0|S=1,a) / (P(Ŷ=0|S=0,a) P(Ŷ=1|S=1,a))`.
pub fn rod<S: AsRef<str>>(dist: &Distribution, yhat: &str, s: &str, a: &[S]) -> Result<(f64, f64)> {
    let schema = dist.schema();
    let y1 = positive_code(schema, yhat)?;
    let s1 = positive_code(schema, s)?;
    let (yi, si) = (schema.position(yhat)?, schema.position(s)?);
    let a_names: Vec<&str> = a.iter().map(AsRef::as_ref).collect();
    if a_names.iter().any(|n| *n == yhat || *n == s) {
        return Err(Error::Validation("stratifying attributes must differ from the outcome and group".into()));
    }
    let (a_schema, a_of) = if a_names.is_empty() {
        (None, vec![0; schema.size()])
    } else {
        let (sub, map) = schema.project(&a_names)?;
        (Some(sub), map)
    };
    let da = a_schema.as_ref().map_or(1, Schema::size);
    // cells[a][s][y], with s and y as 0/1 after mapping the positive code.
    let mut cells = vec![[[0.0f64; 2]; 2]; da];
    for (i, &m) in dist.mass().iter().enumerate() {
        let codes = schema.decode_codes(i);
        let y = usize::from(codes[yi] == y1);
        let sv = usize::from(codes[si] == s1);
        cells[a_of[i]][sv][y] += m;
    }
    let mut total = 0.0;
    let mut strata = 0;
    for (k, c) in cells.iter().enumerate() {
        if c.iter().flatten().sum::<f64>() <= 0.0 {
            continue;
        }
        let name = || match &a_schema {
            Some(sub) => format!("stratum ({})", sub.decode(k).join(",")),
            None => "the only stratum".to_string(),
        };
        let (g0, g1) = (c[0][0] + c[0][1], c[1][0] + c[1][1]);
        if g0 <= 0.0 || g1 <= 0.0 {
            return Err(Error::UndefinedRod(format!("{} lacks one of the groups", name())));
        }
        if c.iter().flatten().any(|v| *v <= 0.0) {
            return Err(Error::UndefinedRod(format!("{} has an empty outcome cell", name())));
        }
        total += (c[0][1] / g0) * (c[1][0] / g1) / ((c[0][0] / g0) * (c[1][1] / g1));
        strata += 1;
    }
    if strata == 0 {
        return Err(Error::UndefinedRod("no stratum carries mass".into()));
    }
    let value = total / strata as f64;
    Ok((value, value.ln()))
}
