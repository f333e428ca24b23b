use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The eight discharge-report sections the pipeline reasons about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalSection {
    ReasonForConsultation,
    PastMedicalHistory,
    CurrentDisease,
    GeneralExploration,
    ComplementaryTests,
    Diagnosis,
    Treatment,
    Evolution,
}

impl CanonicalSection {
    pub const ALL: [CanonicalSection; 8] = [
        CanonicalSection::ReasonForConsultation,
        CanonicalSection::PastMedicalHistory,
        CanonicalSection::CurrentDisease,
        CanonicalSection::GeneralExploration,
        CanonicalSection::ComplementaryTests,
        CanonicalSection::Diagnosis,
        CanonicalSection::Treatment,
        CanonicalSection::Evolution,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CanonicalSection::ReasonForConsultation => "reason_for_consultation",
            CanonicalSection::PastMedicalHistory => "past_medical_history",
            CanonicalSection::CurrentDisease => "current_disease",
            CanonicalSection::GeneralExploration => "general_exploration",
            CanonicalSection::ComplementaryTests => "complementary_tests",
            CanonicalSection::Diagnosis => "diagnosis",
            CanonicalSection::Treatment => "treatment",
            CanonicalSection::Evolution => "evolution",
        }
    }
}

impl fmt::Display for CanonicalSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CanonicalSection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        CanonicalSection::ALL
            .into_iter()
            .find(|c| c.as_str() == key || format!("{c:?}").eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown section `{s}`")))
    }
}

/// One free-text discharge report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DischargeReport {
    pub report_id: String,
    pub patient_id: String,
    pub date: NaiveDate,
    pub body: String,
}

impl DischargeReport {
    pub fn new(
        report_id: impl Into<String>,
        patient_id: impl Into<String>,
        date: NaiveDate,
        body: impl Into<String>,
    ) -> Result<Self> {
        let report = DischargeReport {
            report_id: report_id.into(),
            patient_id: patient_id.into(),
            date,
            body: body.into(),
        };
        report.validate()?;
        Ok(report)
    }

    pub fn validate(&self) -> Result<()> {
        if self.report_id.trim().is_empty() {
            return Err(Error::malformed("<unknown>", "report_id", "empty"));
        }
        if self.patient_id.trim().is_empty() {
            return Err(Error::malformed(&self.report_id, "patient_id", "empty"));
        }
        if self.body.trim().is_empty() {
            return Err(Error::malformed(&self.report_id, "body", "empty"));
        }
        Ok(())
    }
}

/// Half-open byte range into a report body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TextSpan {
    pub start: usize,
    pub end: usize,
}

impl TextSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        TextSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, other: &TextSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

/// A labelled section. `span` covers the header line and its content;
/// `content_start` is where the text after the header begins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub section: CanonicalSection,
    pub span: TextSpan,
    pub content_start: usize,
    pub text: String,
}

impl Section {
    pub fn content_span(&self) -> TextSpan {
        TextSpan::new(self.content_start, self.span.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionedReport {
    pub report: DischargeReport,
    /// Text before the first recognised header.
    pub unsectioned: Option<TextSpan>,
    pub sections: Vec<Section>,
}

impl SectionedReport {
    /// Checks span ordering, bounds and text consistency.
    pub fn validate(&self) -> Result<()> {
        let body = &self.report.body;
        let mut cursor = 0;
        if let Some(span) = self.unsectioned {
            if span.start != 0 {
                return Err(self.bad("unsectioned bucket must start at offset 0"));
            }
            cursor = span.end;
        }
        for s in &self.sections {
            if s.span.start < cursor || s.span.end > body.len() || s.span.start > s.span.end {
                return Err(self.bad("section spans overlap or fall outside the body"));
            }
            if s.content_start < s.span.start || s.content_start > s.span.end {
                return Err(self.bad("content start outside its section"));
            }
            if body.get(s.span.start..s.span.end) != Some(s.text.as_str()) {
                return Err(self.bad("section text does not match its span"));
            }
            cursor = s.span.end;
        }
        Ok(())
    }

    fn bad(&self, message: &str) -> Error {
        Error::malformed(&self.report.report_id, "sections", message)
    }

    /// Concatenation of every bucket in span order.
    pub fn reconstruct(&self) -> String {
        let mut out = String::with_capacity(self.report.body.len());
        if let Some(span) = self.unsectioned {
            out.push_str(&self.report.body[span.start..span.end]);
        }
        for s in &self.sections {
            out.push_str(&s.text);
        }
        out
    }

    pub fn sections_of(&self, kind: CanonicalSection) -> impl Iterator<Item = &Section> {
        self.sections.iter().filter(move |s| s.section == kind)
    }

    /// The section that contains `span`, if any.
    pub fn section_at(&self, span: &TextSpan) -> Option<CanonicalSection> {
        self.sections
            .iter()
            .find(|s| s.span.contains(span))
            .map(|s| s.section)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CodeSystem {
    #[serde(rename = "ICD10")]
    Icd10,
    #[serde(rename = "ATC")]
    Atc,
    #[serde(rename = "LAB")]
    Lab,
    #[serde(rename = "PROC")]
    Proc,
    #[serde(rename = "DEMOG")]
    Demog,
}

impl CodeSystem {
    pub fn as_str(self) -> &'static str {
        match self {
            CodeSystem::Icd10 => "ICD10",
            CodeSystem::Atc => "ATC",
            CodeSystem::Lab => "LAB",
            CodeSystem::Proc => "PROC",
            CodeSystem::Demog => "DEMOG",
        }
    }
}

impl fmt::Display for CodeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CodeSystem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ICD10" | "ICD-10" => Ok(CodeSystem::Icd10),
            "ATC" => Ok(CodeSystem::Atc),
            "LAB" => Ok(CodeSystem::Lab),
            "PROC" => Ok(CodeSystem::Proc),
            "DEMOG" => Ok(CodeSystem::Demog),
            other => Err(Error::Config(format!("unknown code system `{other}`"))),
        }
    }
}

/// One dated, coded structured-EHR fact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodedRecord {
    pub patient_id: String,
    pub date: NaiveDate,
    pub code_system: CodeSystem,
    pub code: String,
    pub value: Option<f64>,
    pub unit: Option<String>,
}

impl CodedRecord {
    pub fn validate(&self) -> Result<()> {
        let id = format!("{}@{}", self.patient_id, self.date);
        if self.patient_id.trim().is_empty() {
            return Err(Error::malformed(id, "patient_id", "empty"));
        }
        if self.code.trim().is_empty() {
            return Err(Error::malformed(id, "code", "empty"));
        }
        if self.code_system == CodeSystem::Lab && self.value.is_none() {
            return Err(Error::malformed(id, "value", "LAB records must carry a value"));
        }
        if let Some(v) = self.value {
            if !v.is_finite() {
                return Err(Error::malformed(id, "value", "not finite"));
            }
        }
        Ok(())
    }

    /// Total order used to make coded processing independent of input order.
    pub fn sort_key(&self) -> (NaiveDate, CodeSystem, &str, u64) {
        (
            self.date,
            self.code_system,
            self.code.as_str(),
            self.value.map_or(0, f64::to_bits),
        )
    }
}
