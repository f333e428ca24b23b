use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::schema::{FeatureSchema, NEW_AF_DIAGNOSIS, PRIOR_AF_IN_HISTORY};

/// One row of the tabular representation. `None` is an explicit missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub patient_id: String,
    pub source_report_id: Option<String>,
    pub date: NaiveDate,
    pub cells: Vec<Option<f64>>,
}

impl FeatureVector {
    pub fn missing(
        patient_id: impl Into<String>,
        source_report_id: Option<String>,
        date: NaiveDate,
        width: usize,
    ) -> Self {
        FeatureVector {
            patient_id: patient_id.into(),
            source_report_id,
            date,
            cells: vec![None; width],
        }
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.cells[i]
    }

    pub fn is_report(&self) -> bool {
        self.source_report_id.is_some()
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecurrenceLabel {
    Recurred,
    NoRecurrence,
    Discarded,
}

impl RecurrenceLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RecurrenceLabel::Recurred => "recurred",
            RecurrenceLabel::NoRecurrence => "no_recurrence",
            RecurrenceLabel::Discarded => "discarded",
        }
    }

    /// Binary training label; `None` for discarded patients.
    pub fn as_binary(self) -> Option<bool> {
        match self {
            RecurrenceLabel::Recurred => Some(true),
            RecurrenceLabel::NoRecurrence => Some(false),
            RecurrenceLabel::Discarded => None,
        }
    }
}

impl fmt::Display for RecurrenceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecurrenceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "recurred" => Ok(RecurrenceLabel::Recurred),
            "no_recurrence" => Ok(RecurrenceLabel::NoRecurrence),
            "discarded" => Ok(RecurrenceLabel::Discarded),
            other => Err(Error::malformed("label", "label", format!("unknown label `{other}`"))),
        }
    }
}

/// All vectors of one patient in ascending date order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientTimeline {
    pub patient_id: String,
    vectors: Vec<FeatureVector>,
    pub onset_date: Option<NaiveDate>,
    pub recurrence_label: Option<RecurrenceLabel>,
}

impl PatientTimeline {
    /// Sorts by date; on equal dates report vectors precede coded ones, then
    /// by report id.
    pub fn new(patient_id: impl Into<String>, mut vectors: Vec<FeatureVector>) -> Result<Self> {
        let patient_id = patient_id.into();
        if let Some(v) = vectors.iter().find(|v| v.patient_id != patient_id) {
            return Err(Error::InvalidArgument(format!(
                "vector of patient {} in timeline of {patient_id}",
                v.patient_id
            )));
        }
        vectors.sort_by(|a, b| {
            a.date
                .cmp(&b.date)
                .then_with(|| b.is_report().cmp(&a.is_report()))
                .then_with(|| a.source_report_id.cmp(&b.source_report_id))
        });
        let timeline = PatientTimeline {
            patient_id,
            vectors,
            onset_date: None,
            recurrence_label: None,
        };
        debug_assert!(timeline.is_sorted());
        Ok(timeline)
    }

    pub fn vectors(&self) -> &[FeatureVector] {
        &self.vectors
    }

    pub fn is_sorted(&self) -> bool {
        self.vectors.windows(2).all(|w| w[0].date <= w[1].date)
    }

    /// Indices of vectors flagged as a new AF diagnosis with no prior AF.
    pub fn onset_candidates(&self, schema: &FeatureSchema) -> Result<Vec<usize>> {
        let new_af = schema.require(NEW_AF_DIAGNOSIS)?;
        let prior = schema.require(PRIOR_AF_IN_HISTORY)?;
        Ok(self
            .vectors
            .iter()
            .enumerate()
            .filter(|(_, v)| v.get(new_af) == Some(1.0) && v.get(prior) == Some(0.0))
            .map(|(i, _)| i)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::malformed("labels", "split", format!("unknown split `{other}`"))),
        }
    }
}

/// Patient-level table with labels and a train/test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub rows: Vec<FeatureVector>,
    pub labels: Vec<bool>,
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn new(
        schema: FeatureSchema,
        rows: Vec<FeatureVector>,
        labels: Vec<bool>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        if rows.len() != labels.len() || rows.len() != splits.len() {
            return Err(Error::InvalidArgument(format!(
                "dataset has {} rows, {} labels and {} split tags",
                rows.len(),
                labels.len(),
                splits.len()
            )));
        }
        let mut seen = HashSet::new();
        for row in &rows {
            if !seen.insert(row.patient_id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "patient {} appears twice in the dataset",
                    row.patient_id
                )));
            }
            schema.validate_vector(row)?;
        }
        Ok(Dataset {
            schema,
            rows,
            labels,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Keeps only the given rows, in the given order.
    pub fn subset_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: rows.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            splits: rows.iter().map(|&i| self.splits[i]).collect(),
        }
    }

    /// Keeps only the given columns, in the given order.
    pub fn project(&self, columns: &[usize]) -> Result<Dataset> {
        let schema = self.schema.project(columns)?;
        let rows = self
            .rows
            .iter()
            .map(|r| FeatureVector {
                cells: columns.iter().map(|&c| r.cells[c]).collect(),
                ..r.clone()
            })
            .collect();
        Ok(Dataset {
            schema,
            rows,
            labels: self.labels.clone(),
            splits: self.splits.clone(),
        })
    }

    /// Dense row-major values for the given rows; missing cells become NaN.
    pub fn dense(&self, rows: &[usize]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|&i| {
                self.rows[i]
                    .cells
                    .iter()
                    .map(|c| c.unwrap_or(f64::NAN))
                    .collect()
            })
            .collect()
    }

    pub fn labels_of(&self, rows: &[usize]) -> Vec<bool> {
        rows.iter().map(|&i| self.labels[i]).collect()
    }
}
