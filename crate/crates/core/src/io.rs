//! CSV datasets, domain files and constraint files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::dist::{Attribute, CiConstraint, Distribution, Schema};
use crate::error::{Error, Result};

/// Rows of string cells under a header.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Bin labels and midpoints of binned columns, in bin order.
    binned: BTreeMap<String, Vec<(String, f64)>>,
}

/// Ordered labels per attribute, as read from a domain file.
pub type Domains = BTreeMap<String, Vec<String>>;

impl Dataset {
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(Error::EmptyInput("CSV has no header".into()));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != header.len() {
                return Err(Error::Line {
                    line,
                    message: format!("expected {} fields, found {}", header.len(), rec.len()),
                });
            }
            rows.push(rec.iter().map(|c| c.trim().to_string()).collect());
        }
        if rows.is_empty() {
            return Err(Error::EmptyInput("CSV has a header but no rows".into()));
        }
        Ok(Self {
            header,
            rows,
            binned: BTreeMap::new(),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(File::open(path)?)
    }

    pub fn write_to(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(File::create(path)?)
    }

    /// Replaces every all-numeric column by `k` equal-width bins labelled
    /// `lo..hi`. Binned columns get all `k` labels in bin order as their
    /// domain and the bin midpoints as numeric values. Returns the names of
    /// the binned columns.
    pub fn bin_numeric(&mut self, k: usize) -> Result<Vec<String>> {
        if k == 0 {
            return Err(Error::Validation("--bins needs at least one bin".into()));
        }
        let mut names = Vec::new();
        for col in 0..self.header.len() {
            let values: Option<Vec<f64>> = self.rows.iter().map(|r| r[col].parse::<f64>().ok()).collect();
            let Some(values) = values.filter(|v| v.iter().all(|x| x.is_finite())) else {
                continue;
            };
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let width = if hi > lo { (hi - lo) / k as f64 } else { 1.0 };
            let edge = |b: usize| lo + width * b as f64;
            let bins: Vec<(String, f64)> = (0..k)
                .map(|b| (format!("{}..{}", edge(b), edge(b + 1)), edge(b) + width / 2.0))
                .collect();
            for (row, v) in self.rows.iter_mut().zip(&values) {
                let b = (((v - lo) / width) as usize).min(k - 1);
                row[col] = bins[b].0.clone();
            }
            names.push(self.header[col].clone());
            self.binned.insert(self.header[col].clone(), bins);
        }
        Ok(names)
    }

    /// Schema with domains from `domains` where given, otherwise in order
    /// of first appearance. Columns whose labels all parse as numbers use
    /// those numbers for the euclidean cost.
    pub fn infer_schema(&self, domains: Option<&Domains>) -> Result<Schema> {
        if let Some(d) = domains {
            if let Some(extra) = d.keys().find(|k| !self.header.contains(k)) {
                return Err(Error::UnknownAttribute(extra.clone()));
            }
        }
        let mut attrs = Vec::with_capacity(self.header.len());
        for (col, name) in self.header.iter().enumerate() {
            let labels = match (domains.and_then(|d| d.get(name)), self.binned.get(name)) {
                (Some(l), _) => l.clone(),
                (None, Some(bins)) => bins.iter().map(|b| b.0.clone()).collect(),
                (None, None) => {
                    let mut seen = Vec::new();
                    for r in &self.rows {
                        if !seen.contains(&r[col]) {
                            seen.push(r[col].clone());
                        }
                    }
                    seen
                }
            };
            attrs.push(Attribute::new(name.clone(), labels));
        }
        let mut schema = Schema::new(attrs)?;
        for name in &self.header {
            let pos = schema.position(name)?;
            let parsed: Option<Vec<f64>> = schema.attributes()[pos]
                .labels()
                .iter()
                .map(|l| l.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect();
            if let Some(values) = parsed {
                schema = schema.with_numeric(name, values)?;
            } else if let Some(bins) = self.binned.get(name) {
                let mids: Option<Vec<f64>> = schema.attributes()[pos]
                    .labels()
                    .iter()
                    .map(|l| bins.iter().find(|b| &b.0 == l).map(|b| b.1))
                    .collect();
                if let Some(mids) = mids {
                    schema = schema.with_numeric(name, mids)?;
                }
            }
        }
        Ok(schema)
    }

    /// Joint indices of every row, with line-numbered label errors.
    pub fn encode(&self, schema: &Schema) -> Result<Vec<usize>> {
        if schema.names() != self.header.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Validation("CSV header does not match the schema".into()));
        }
        self.rows
            .iter()
            .enumerate()
            .map(|(k, r)| {
                schema.encode(r).map_err(|e| Error::Line {
                    // header is line 1
                    line: k as u64 + 2,
                    message: e.to_string(),
                })
            })
            .collect()
    }

    pub fn empirical(&self, schema: &Schema) -> Result<Distribution> {
        Distribution::from_indices(&self.encode(schema)?, schema.clone())
    }

    pub fn from_indices(schema: &Schema, indices: &[usize]) -> Self {
        Self {
            header: schema.names().into_iter().map(String::from).collect(),
            rows: indices
                .iter()
                .map(|&i| schema.decode(i).into_iter().map(String::from).collect())
                .collect(),
            binned: BTreeMap::new(),
        }
    }
}

pub fn read_domains(path: impl AsRef<Path>) -> Result<Domains> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}

/// Reads `{"x": [...], "y": [...], "z": [...]}`; `z` may be absent.
pub fn read_constraint(path: impl AsRef<Path>) -> Result<CiConstraint> {
    parse_constraint(&std::fs::read_to_string(path)?)
}

pub fn parse_constraint(text: &str) -> Result<CiConstraint> {
    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Doc {
        x: Vec<String>,
        y: Vec<String>,
        #[serde(default)]
        z: Vec<String>,
    }
    let d: Doc = serde_json::from_str(text)?;
    CiConstraint::new(d.x, d.y, d.z)
}

#[cfg(test)]
mod tests {
    use super::*;

    const D2: &str = "X,Y,Z\n1,0,0\n1,0,1\n1,1,0\n1,1,0\n";

    #[test]
    fn reads_and_infers_first_appearance() {
        let d = Dataset::from_reader(D2.as_bytes()).unwrap();
        let s = d.infer_schema(None).unwrap();
        assert_eq!(s.attributes()[0].labels(), ["1"]);
        assert_eq!(s.attributes()[1].labels(), ["0", "1"]);
        assert_eq!(s.attributes()[1].numeric(), [0.0, 1.0]);
        let p = d.empirical(&s).unwrap();
        assert_eq!(p.mass(), [0.25, 0.25, 0.5, 0.0]);
    }

    #[test]
    fn domain_file_fixes_order() {
        let d = Dataset::from_reader(D2.as_bytes()).unwrap();
        let mut dom = Domains::new();
        dom.insert("X".into(), vec!["0".into(), "1".into()]);
        let s = d.infer_schema(Some(&dom)).unwrap();
        assert_eq!(s.size(), 8);
        dom.insert("Q".into(), vec!["a".into()]);
        assert!(matches!(d.infer_schema(Some(&dom)), Err(Error::UnknownAttribute(_))));
    }

    #[test]
    fn ragged_row_names_its_line() {
        let err = Dataset::from_reader("A,B\n1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Line { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_label_names_its_line() {
        let d = Dataset::from_reader(D2.as_bytes()).unwrap();
        let s = d.infer_schema(None).unwrap();
        let other = Dataset::from_reader("X,Y,Z\n1,0,0\n2,0,0\n".as_bytes()).unwrap();
        let err = other.encode(&s).unwrap_err();
        assert!(matches!(err, Error::Line { line: 3, .. }), "{err}");
    }

    #[test]
    fn binning() {
        let mut d = Dataset::from_reader("A,B\n10,x\n0,y\n4,x\n".as_bytes()).unwrap();
        assert_eq!(d.bin_numeric(2).unwrap(), ["A"]);
        assert_eq!(d.rows[0][0], "5..10");
        assert_eq!(d.rows[1][0], "0..5");
        assert_eq!(d.rows[2][0], "0..5");
        let s = d.infer_schema(None).unwrap();
        assert_eq!(s.attributes()[0].labels(), ["0..5", "5..10"]);
        assert_eq!(s.attributes()[0].numeric(), [2.5, 7.5]);
    }

    #[test]
    fn csv_round_trip() {
        let d = Dataset::from_reader(D2.as_bytes()).unwrap();
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), D2);
    }

    #[test]
    fn constraint_file() {
        let c = parse_constraint(r#"{"x": ["Y"], "y": ["Z"]}"#).unwrap();
        assert!(c.z.is_empty());
        assert!(parse_constraint(r#"{"x": ["Y"], "y": ["Z"], "w": []}"#).is_err());
    }
}
