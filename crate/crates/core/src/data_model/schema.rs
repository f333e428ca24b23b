use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::vector::FeatureVector;

pub const NEW_AF_DIAGNOSIS: &str = "new_af_diagnosis";
pub const PRIOR_AF_IN_HISTORY: &str = "prior_af_in_history";
pub const AF_TYPE: &str = "af_type";
pub const POTENTIAL_RECURRENCE: &str = "potential_recurrence";

pub const AF_FLAG_COLUMNS: [&str; 4] = [
    NEW_AF_DIAGNOSIS,
    PRIOR_AF_IN_HISTORY,
    AF_TYPE,
    POTENTIAL_RECURRENCE,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Binary,
    Numeric,
    /// Integer codes `0..cardinality`.
    Categorical(u8),
}

impl ColumnKind {
    pub fn accepts(self, value: f64) -> bool {
        match self {
            ColumnKind::Binary => value == 0.0 || value == 1.0,
            ColumnKind::Numeric => value.is_finite(),
            ColumnKind::Categorical(card) => {
                value.fract() == 0.0 && value >= 0.0 && value < f64::from(card)
            }
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnKind::Numeric)
    }
}

/// Temporal merge window family a column belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowClass {
    History,
    Lab,
    Procedure,
    Demographic,
    AfFlag,
}

impl WindowClass {
    pub const ALL: [WindowClass; 5] = [
        WindowClass::History,
        WindowClass::Lab,
        WindowClass::Procedure,
        WindowClass::Demographic,
        WindowClass::AfFlag,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WindowClass::History => "history",
            WindowClass::Lab => "lab",
            WindowClass::Procedure => "procedure",
            WindowClass::Demographic => "demographic",
            WindowClass::AfFlag => "af_flag",
        }
    }
}

impl fmt::Display for WindowClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WindowClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WindowClass::ALL
            .into_iter()
            .find(|w| w.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown window class `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub window_class: WindowClass,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind, window_class: WindowClass) -> Self {
        ColumnSpec {
            name: name.into(),
            kind,
            window_class,
        }
    }
}

/// Ordered column list of the tabular representation.
///
/// [`FeatureSchema::new`] only enforces unique names so that projections
/// (selected feature subsets, test fixtures) remain expressible; files loaded
/// through `load_schema` must additionally carry the four AF flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ColumnSpec>", into = "Vec<ColumnSpec>")]
pub struct FeatureSchema {
    columns: Vec<ColumnSpec>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<ColumnSpec>> for FeatureSchema {
    type Error = Error;

    fn try_from(columns: Vec<ColumnSpec>) -> Result<Self> {
        FeatureSchema::new(columns)
    }
}

impl From<FeatureSchema> for Vec<ColumnSpec> {
    fn from(schema: FeatureSchema) -> Self {
        schema.columns
    }
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let mut index = HashMap::with_capacity(columns.len());
        for (i, c) in columns.iter().enumerate() {
            if c.name.trim().is_empty() {
                return Err(Error::SchemaMismatch(format!("column {i} has an empty name")));
            }
            if let ColumnKind::Categorical(0) = c.kind {
                return Err(Error::UnknownKind {
                    column: c.name.clone(),
                    kind: "categorical(0)".into(),
                });
            }
            if index.insert(c.name.clone(), i).is_some() {
                return Err(Error::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(FeatureSchema { columns, index })
    }

    /// Fails unless every AF flag column is present.
    pub fn require_af_flags(&self) -> Result<()> {
        for flag in AF_FLAG_COLUMNS {
            if !self.index.contains_key(flag) {
                return Err(Error::MissingAfFlag(flag.to_string()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &ColumnSpec {
        &self.columns[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// Sub-schema with the given columns, in the given order.
    pub fn project(&self, indices: &[usize]) -> Result<FeatureSchema> {
        FeatureSchema::new(indices.iter().map(|&i| self.columns[i].clone()).collect())
    }

    pub fn validate_vector(&self, v: &FeatureVector) -> Result<()> {
        if v.cells.len() != self.len() {
            return Err(Error::SchemaMismatch(format!(
                "vector for {} has {} cells, schema has {}",
                v.patient_id,
                v.cells.len(),
                self.len()
            )));
        }
        for (spec, cell) in self.columns.iter().zip(&v.cells) {
            if let Some(x) = cell {
                if !spec.kind.accepts(*x) {
                    return Err(Error::SchemaMismatch(format!(
                        "value {x} is not valid for {:?} column `{}` (patient {})",
                        spec.kind, spec.name, v.patient_id
                    )));
                }
            }
        }
        Ok(())
    }
}
