//! Coded EHR rows to per-date feature vectors.
//!
//! A code map entry is either an exact code or a prefix ending in `*`. An
//! exact entry beats any prefix, and among prefixes the longest wins.
//! Records are canonically sorted first, so the output does not depend on
//! input order.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{CodeSystem, CodedRecord, FeatureSchema, FeatureVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueMode {
    #[serde(rename = "set_binary_1")]
    SetBinary1,
    CopyValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeMapEntry {
    pub code_system: CodeSystem,
    pub code_pattern: String,
    pub feature_column: String,
    pub value_mode: ValueMode,
}

impl CodeMapEntry {
    fn prefix(&self) -> Option<&str> {
        self.code_pattern.strip_suffix('*')
    }
}

#[derive(Debug, Clone)]
pub struct CodeMap {
    entries: Vec<CodeMapEntry>,
    columns: Vec<usize>,
    exact: HashMap<(CodeSystem, String), usize>,
}

impl CodeMap {
    /// Fails on unknown columns and duplicate `(system, pattern)` pairs.
    pub fn new(entries: Vec<CodeMapEntry>, schema: &FeatureSchema) -> Result<Self> {
        let mut columns = Vec::with_capacity(entries.len());
        let mut seen = HashMap::new();
        let mut exact = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            columns.push(schema.require(&e.feature_column)?);
            let key = (e.code_system, e.code_pattern.to_ascii_uppercase());
            if seen.insert(key.clone(), i).is_some() {
                return Err(Error::Config(format!(
                    "code map lists {} {} twice",
                    e.code_system, e.code_pattern
                )));
            }
            if e.prefix().is_none() {
                exact.insert(key, i);
            }
        }
        Ok(CodeMap {
            entries,
            columns,
            exact,
        })
    }

    /// Parses `code_system,code_pattern,feature_column,value_mode` CSV text.
    pub fn parse(text: &str, schema: &FeatureSchema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut entries = Vec::new();
        for (i, rec) in rdr.deserialize::<CodeMapEntry>().enumerate() {
            entries.push(
                rec.map_err(|e| Error::malformed(format!("code map row {}", i + 2), "csv", e.to_string()))?,
            );
        }
        CodeMap::new(entries, schema)
    }

    pub fn load(path: &Path, schema: &FeatureSchema) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CodeMap::parse(&text, schema)
    }

    pub fn bundled(schema: &FeatureSchema) -> Result<Self> {
        CodeMap::parse(crate::resources::CODEMAP_CSV, schema)
    }

    pub fn entries(&self) -> &[CodeMapEntry] {
        &self.entries
    }

    /// Index of the entry that maps `(system, code)`.
    pub fn lookup(&self, system: CodeSystem, code: &str) -> Option<usize> {
        let code = code.trim().to_ascii_uppercase();
        if let Some(&i) = self.exact.get(&(system, code.clone())) {
            return Some(i);
        }
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.code_system == system)
            .filter_map(|(i, e)| {
                let p = e.prefix()?.to_ascii_uppercase();
                code.starts_with(&p).then_some((p.len(), i))
            })
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
            .map(|(_, i)| i)
    }

    /// Schema column of entry `i`.
    pub fn column(&self, i: usize) -> usize {
        self.columns[i]
    }

    pub fn entry(&self, i: usize) -> &CodeMapEntry {
        &self.entries[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodedWarning {
    pub patient_id: String,
    pub date: NaiveDate,
    pub code: String,
    pub message: String,
}

/// Vectors of one patient with, per vector, the input records behind each
/// filled cell.
#[derive(Debug, Clone, Default)]
pub struct StructuredVectors {
    pub vectors: Vec<FeatureVector>,
    /// `provenance[v][col]` lists the records that set that cell.
    pub provenance: Vec<BTreeMap<usize, Vec<CodedRecord>>>,
    pub unmapped: usize,
    pub warnings: Vec<CodedWarning>,
}

fn forbids_negative(system: CodeSystem) -> bool {
    matches!(system, CodeSystem::Lab | CodeSystem::Demog)
}

pub fn vectorize_coded(
    records: &[CodedRecord],
    map: &CodeMap,
    schema: &FeatureSchema,
) -> Result<StructuredVectors> {
    let mut out = StructuredVectors::default();
    let Some(first) = records.first() else {
        return Ok(out);
    };
    if let Some(r) = records.iter().find(|r| r.patient_id != first.patient_id) {
        return Err(Error::InvalidArgument(format!(
            "records of {} and {} passed as one patient",
            first.patient_id, r.patient_id
        )));
    }
    let mut sorted: Vec<&CodedRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));

    let mut by_date: BTreeMap<NaiveDate, (FeatureVector, BTreeMap<usize, Vec<CodedRecord>>)> =
        BTreeMap::new();
    for r in sorted {
        let warn = |message: String| CodedWarning {
            patient_id: r.patient_id.clone(),
            date: r.date,
            code: format!("{}:{}", r.code_system, r.code),
            message,
        };
        let Some(entry) = map.lookup(r.code_system, &r.code) else {
            out.unmapped += 1;
            out.warnings.push(warn("unmapped code".into()));
            continue;
        };
        let col = map.column(entry);
        let kind = schema.column(col).kind;
        let value = match map.entry(entry).value_mode {
            ValueMode::SetBinary1 => 1.0,
            ValueMode::CopyValue => match r.value {
                None => {
                    out.warnings.push(warn("copy_value record without a value".into()));
                    continue;
                }
                Some(x) if x < 0.0 && forbids_negative(r.code_system) => {
                    out.warnings.push(warn(format!("negative value {x} dropped")));
                    continue;
                }
                Some(x) => x,
            },
        };
        if !kind.accepts(value) {
            out.warnings.push(warn(format!(
                "value {value} not valid for `{}`",
                schema.column(col).name
            )));
            continue;
        }
        let (v, prov) = by_date.entry(r.date).or_insert_with(|| {
            (
                FeatureVector::missing(&r.patient_id, None, r.date, schema.len()),
                BTreeMap::new(),
            )
        });
        v.cells[col] = Some(value);
        prov.entry(col).or_default().push(r.clone());
    }
    for (_, (v, prov)) in by_date {
        out.vectors.push(v);
        out.provenance.push(prov);
    }
    Ok(out)
}

/// Error-injection settings for coded data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    /// Fraction of records removed outright.
    pub drop_rate: f64,
    /// Fraction of the surviving records whose code is garbled so that it no
    /// longer maps.
    pub corrupt_rate: f64,
    pub seed: u64,
}

impl Corruption {
    pub fn none() -> Self {
        Corruption {
            drop_rate: 0.0,
            corrupt_rate: 0.0,
            seed: 0,
        }
    }
}

/// Applies [`Corruption`] with exact quotas: `round(rate * n)` records are
/// affected, chosen by a seeded shuffle. Input order is kept.
pub fn corrupt_records(records: &[CodedRecord], c: &Corruption) -> Result<Vec<CodedRecord>> {
    for (name, rate) in [("drop_rate", c.drop_rate), ("corrupt_rate", c.corrupt_rate)] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {rate}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut rng);
    let n_drop = (c.drop_rate * records.len() as f64).round() as usize;
    let mut dropped = vec![false; records.len()];
    for &i in &order[..n_drop] {
        dropped[i] = true;
    }
    let survivors: Vec<usize> = (0..records.len()).filter(|&i| !dropped[i]).collect();
    let n_corrupt = (c.corrupt_rate * survivors.len() as f64).round() as usize;
    let mut garble = vec![false; records.len()];
    let mut pool = survivors.clone();
    pool.shuffle(&mut rng);
    for &i in &pool[..n_corrupt] {
        garble[i] = true;
    }
    Ok(survivors
        .into_iter()
        .map(|i| {
            let mut r = records[i].clone();
            if garble[i] {
                r.code = format!("?{}{:04}", r.code, rng.random_range(0..10_000));
            }
            r
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resources::canonical_schema;

    #[test]
    fn exact_entry_beats_prefix() {
        let schema = canonical_schema();
        let map = CodeMap::bundled(&schema).unwrap();
        let e = map.lookup(CodeSystem::Icd10, "I48.3").unwrap();
        assert_eq!(map.entry(e).feature_column, "flutter");
        let e = map.lookup(CodeSystem::Icd10, "I48.0").unwrap();
        assert_eq!(map.entry(e).feature_column, "new_af_diagnosis");
        assert!(map.lookup(CodeSystem::Atc, "I48.0").is_none());
    }

    #[test]
    fn duplicate_pattern_is_rejected() {
        let schema = canonical_schema();
        let text = "code_system,code_pattern,feature_column,value_mode\n\
                    ATC,C07*,c07,set_binary_1\nATC,C07*,c07,set_binary_1\n";
        assert!(CodeMap::parse(text, &schema).is_err());
    }
}
