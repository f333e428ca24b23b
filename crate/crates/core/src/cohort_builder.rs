//! Patient inclusion with a coded-plus-text double check, exclusions, and
//! silver recurrence labels.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::data_model::{
    CodedRecord, DischargeReport, FeatureSchema, FeatureVector, RecurrenceLabel, NEW_AF_DIAGNOSIS,
};
use crate::entity_extractor::{AnnotatedReport, RulePack};
use crate::error::{Error, Result};
use crate::structured2vector::CodeMap;

/// Recurrence evidence must fall in `(onset + LOWER, onset + UPPER]` days.
pub const RECURRENCE_WINDOW_LOWER: u64 = 30;
pub const RECURRENCE_WINDOW_UPPER: u64 = 730;
/// Deaths on or before `onset + EARLY_DEATH_DAYS` exclude the patient.
pub const EARLY_DEATH_DAYS: u64 = 92;
/// Patients strictly older than this at onset are excluded.
pub const MAX_AGE: f64 = 90.0;

/// Patients with an AF diagnosis code, mapped to their earliest AF code date.
pub fn filter_patients(coded: &[CodedRecord], map: &CodeMap, schema: &FeatureSchema) -> Result<BTreeMap<String, NaiveDate>> {
    let af_col = schema.require(NEW_AF_DIAGNOSIS)?;
    let mut out: BTreeMap<String, NaiveDate> = BTreeMap::new();
    for r in coded {
        let Some(e) = map.lookup(r.code_system, &r.code) else {
            continue;
        };
        if map.column(e) != af_col {
            continue;
        }
        out.entry(r.patient_id.clone())
            .and_modify(|d| *d = (*d).min(r.date))
            .or_insert(r.date);
    }
    Ok(out)
}

/// Keyword pre-filter: keeps every report with an AF surface form, negated
/// or not.
pub fn term_screen<'a>(reports: &'a [DischargeReport], pack: &RulePack) -> Vec<&'a DischargeReport> {
    reports.iter().filter(|r| pack.mentions_af_term(&r.body)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnsetConfirmation {
    pub confirmed: bool,
    pub onset_report_id: Option<String>,
    pub onset_date: Option<NaiveDate>,
}

/// Earliest report that classifies as an AF onset.
pub fn confirm_onset(reports: &[&AnnotatedReport]) -> OnsetConfirmation {
    let onset = reports
        .iter()
        .filter(|r| r.onset.is_onset)
        .min_by(|a, b| {
            (a.report().date, &a.report().report_id).cmp(&(b.report().date, &b.report().report_id))
        });
    OnsetConfirmation {
        confirmed: onset.is_some(),
        onset_report_id: onset.map(|r| r.report().report_id.clone()),
        onset_date: onset.map(|r| r.report().date),
    }
}

pub fn in_recurrence_window(onset: NaiveDate, date: NaiveDate) -> bool {
    let lo = onset + Days::new(RECURRENCE_WINDOW_LOWER);
    let hi = onset + Days::new(RECURRENCE_WINDOW_UPPER);
    date > lo && date <= hi
}

/// Silver label from the reports of one patient; only those dated inside the
/// recurrence window are considered.
pub fn label_recurrence(onset: NaiveDate, reports: &[&AnnotatedReport]) -> RecurrenceLabel {
    let window: Vec<_> = reports
        .iter()
        .filter(|r| in_recurrence_window(onset, r.report().date))
        .collect();
    if window.iter().any(|r| r.onset.is_af_report) {
        RecurrenceLabel::Recurred
    } else if window.iter().any(|r| r.has_sinus_rhythm()) {
        RecurrenceLabel::NoRecurrence
    } else {
        RecurrenceLabel::Discarded
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    NoAfCode,
    OnsetNotConfirmed,
    AgeOver90,
    EarlyDeath,
}

impl ExclusionReason {
    pub const ALL: [ExclusionReason; 4] = [
        ExclusionReason::NoAfCode,
        ExclusionReason::OnsetNotConfirmed,
        ExclusionReason::AgeOver90,
        ExclusionReason::EarlyDeath,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::NoAfCode => "no_af_code",
            ExclusionReason::OnsetNotConfirmed => "onset_not_confirmed",
            ExclusionReason::AgeOver90 => "age_over_90",
            ExclusionReason::EarlyDeath => "early_death",
        }
    }
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExclusionReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExclusionReason::ALL
            .into_iter()
            .find(|r| r.as_str() == s.trim())
        .ok_or_else(|| Error::malformed("manifest", "exclusion_reason", s.to_string()))
    }
}

/// Exclusion rule for a confirmed patient. Age is checked first.
pub fn exclusion_for(onset: NaiveDate, age: Option<f64>, death: Option<NaiveDate>) -> Option<ExclusionReason> {
    if age.is_some_and(|a| a > MAX_AGE) {
        return Some(ExclusionReason::AgeOver90);
    }
    if death.is_some_and(|d| d <= onset + Days::new(EARLY_DEATH_DAYS)) {
        return Some(ExclusionReason::EarlyDeath);
    }
    None
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortEntry {
    pub patient_id: String,
    pub onset_date: Option<NaiveDate>,
    pub onset_report_id: Option<String>,
    pub label: Option<RecurrenceLabel>,
    pub exclusion: Option<ExclusionReason>,
    /// Merged onset-anchored vector for confirmed patients.
    #[serde(skip)]
    pub merged: Option<FeatureVector>,
}

impl CohortEntry {
    pub fn excluded(&self) -> bool {
        self.exclusion.is_some()
    }

    /// In the final dataset: confirmed, not excluded, and not discarded.
    pub fn in_dataset(&self) -> bool {
        !self.excluded() && matches!(self.label, Some(l) if l != RecurrenceLabel::Discarded)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionWarning {
    pub patient_id: String,
    pub message: String,
}

/// Marks confirmed entries that meet an exclusion rule. Age comes from the
/// merged vector; a missing age keeps the patient and records a warning.
pub fn apply_exclusions(
    cohort: &mut [CohortEntry],
    schema: &FeatureSchema,
    deaths: &BTreeMap<String, NaiveDate>,
) -> Result<Vec<ExclusionWarning>> {
    let age_col = schema.require("age")?;
    let mut warnings = Vec::new();
    for e in cohort.iter_mut() {
        let Some(onset) = e.onset_date else {
            continue;
        };
        if e.exclusion.is_some() {
            continue;
        }
        let age = e.merged.as_ref().and_then(|v| v.cells[age_col]);
        if age.is_none() {
            warnings.push(ExclusionWarning {
                patient_id: e.patient_id.clone(),
                message: "age missing at onset; patient retained".into(),
            });
        }
        e.exclusion = exclusion_for(onset, age, deaths.get(&e.patient_id).copied());
    }
    Ok(warnings)
}

const MANIFEST_HEADER: [&str; 5] = ["patient_id", "onset_date", "label", "excluded", "exclusion_reason"];

pub fn write_manifest<W: std::io::Write>(out: W, cohort: &[CohortEntry]) -> Result<()> {
    let origin = std::path::Path::new("<manifest>");
    let err = |e: csv::Error| crate::data_model::io::csv_write_error(origin, e);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MANIFEST_HEADER).map_err(err)?;
    for e in cohort {
        w.write_record([
            e.patient_id.as_str(),
            &e.onset_date.map(|d| d.to_string()).unwrap_or_default(),
            e.label.map_or("", RecurrenceLabel::as_str),
            if e.excluded() { "1" } else { "0" },
            e.exclusion.map_or("", ExclusionReason::as_str),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(origin, e))
}

pub fn read_manifest<R: std::io::Read>(input: R) -> Result<Vec<CohortEntry>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let origin = std::path::Path::new("<manifest>");
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| crate::data_model::io::csv_write_error(origin, e))?;
        let onset_date = match &rec[1] {
            "" => None,
            s => Some(crate::data_model::io::parse_date(&rec[0], "onset_date", s)?),
        };
        let label = match &rec[2] {
            "" => None,
            s => Some(s.parse()?),
        };
        let exclusion = match &rec[4] {
            "" => None,
            s => Some(s.parse()?),
        };
        out.push(CohortEntry {
            patient_id: rec[0].to_string(),
            onset_date,
            onset_report_id: None,
            label,
            exclusion,
            merged: None,
        });
    }
    Ok(out)
}
