//! Synthetic patients with a known ground truth: discharge reports, coded
//! records, death dates and a truth manifest holding every planted cell.
//!
//! Each patient is planned from one seeded stream (status, sex, age, label)
//! and then rendered from its own derived stream, so patients can be
//! generated in parallel without changing the output. Every fact is stated
//! with the same value wherever it appears, and sources are placed so that
//! the onset-anchored merge windows see exactly the planted cells: prior
//! reports are dated at least 200 days before onset (outside the lab and
//! procedure windows) and follow-ups up to day 92 carry no labs, echo or
//! demographics.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort_builder::{read_manifest, write_manifest, CohortEntry, ExclusionReason};
use crate::data_model::io::{self, format_number};
use crate::data_model::{
    af_type, CodeSystem, CodedRecord, DischargeReport, FeatureSchema, RecurrenceLabel, AF_TYPE,
    NEW_AF_DIAGNOSIS, POTENTIAL_RECURRENCE, PRIOR_AF_IN_HISTORY,
};
use crate::error::{Error, Result};
use crate::structured2vector::{corrupt_records, Corruption};

pub const REPORTS_FILE: &str = "reports.jsonl";
pub const CODED_FILE: &str = "coded.csv";
pub const DEATHS_FILE: &str = "deaths.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const TRUTH_MANIFEST_FILE: &str = "truth_manifest.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    Es,
    En,
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "es" => Ok(Language::Es),
            "en" => Ok(Language::En),
            other => Err(Error::Config(format!("unknown language `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub patients: usize,
    /// Share of recurrences among patients that end up in the dataset.
    pub prevalence: f64,
    pub female_fraction: f64,
    pub age_mean_female: f64,
    pub age_mean_male: f64,
    pub age_sd: f64,
    /// Fraction of coded records deleted after generation.
    pub corruption_rate: f64,
    pub language: Language,
    pub seed: u64,
    pub no_af_code_rate: f64,
    pub unconfirmed_rate: f64,
    pub early_death_rate: f64,
    pub discard_rate: f64,
    /// Chance that a coded fact has no mirror in the text.
    pub coded_only_rate: f64,
    /// Strength of the label-dependent shift in a few features; 0 makes
    /// labels independent of the vectors.
    pub signal: f64,
}

impl GeneratorConfig {
    pub fn new(patients: usize, seed: u64) -> Self {
        GeneratorConfig {
            patients,
            prevalence: 0.63,
            female_fraction: 0.5116,
            age_mean_female: 80.0,
            age_mean_male: 72.0,
            age_sd: 10.0,
            corruption_rate: 0.0,
            language: Language::Es,
            seed,
            no_af_code_rate: 0.05,
            unconfirmed_rate: 0.05,
            early_death_rate: 0.03,
            discard_rate: 0.12,
            coded_only_rate: 0.02,
            signal: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        let closed = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        open("prevalence", self.prevalence)?;
        closed("female_fraction", self.female_fraction)?;
        closed("corruption_rate", self.corruption_rate)?;
        closed("no_af_code_rate", self.no_af_code_rate)?;
        closed("unconfirmed_rate", self.unconfirmed_rate)?;
        closed("early_death_rate", self.early_death_rate)?;
        closed("discard_rate", self.discard_rate)?;
        closed("coded_only_rate", self.coded_only_rate)?;
        if self.no_af_code_rate + self.unconfirmed_rate > 1.0 {
            return Err(Error::Config("status rates sum above 1".into()));
        }
        if !(self.age_sd > 0.0) || !self.signal.is_finite() {
            return Err(Error::Config("age_sd must be positive and signal finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatientStatus {
    NoAfCode,
    Unconfirmed,
    Confirmed,
}

impl PatientStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PatientStatus::NoAfCode => "no_af_code",
            PatientStatus::Unconfirmed => "unconfirmed",
            PatientStatus::Confirmed => "confirmed",
        }
    }
}

impl FromStr for PatientStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "no_af_code" => Ok(PatientStatus::NoAfCode),
            "unconfirmed" => Ok(PatientStatus::Unconfirmed),
            "confirmed" => Ok(PatientStatus::Confirmed),
            other => Err(Error::malformed("truth", "status", other.to_string())),
        }
    }
}

/// Ground truth for one patient. `cells` is the expected merged onset
/// vector (all missing for unconfirmed patients).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub patient_id: String,
    pub status: PatientStatus,
    pub onset_date: Option<NaiveDate>,
    pub onset_report_id: Option<String>,
    pub label: Option<RecurrenceLabel>,
    pub exclusion: Option<ExclusionReason>,
    pub cells: Vec<Option<f64>>,
}

impl TruthRecord {
    pub fn in_dataset(&self) -> bool {
        self.exclusion.is_none() && matches!(self.label, Some(l) if l != RecurrenceLabel::Discarded)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub reports: Vec<DischargeReport>,
    pub coded: Vec<CodedRecord>,
    pub deaths: BTreeMap<String, NaiveDate>,
    pub truth: Vec<TruthRecord>,
}

impl SyntheticCorpus {
    /// Writes reports, coded rows, deaths, `truth.csv` and the truth
    /// manifest into `dir`.
    pub fn write(&self, dir: &Path, schema: &FeatureSchema) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_corpus_jsonl(&dir.join(REPORTS_FILE), &self.reports)?;
        io::write_coded_csv(&dir.join(CODED_FILE), &self.coded)?;
        io::write_deaths(&dir.join(DEATHS_FILE), &self.deaths)?;
        write_truth(&dir.join(TRUTH_FILE), &self.truth, schema)?;
        let path = dir.join(TRUTH_MANIFEST_FILE);
        let entries: Vec<CohortEntry> = self.truth.iter().map(TruthRecord::to_entry).collect();
        write_manifest(io::create_file(&path)?, &entries)
    }
}

impl TruthRecord {
    /// The cohort manifest row the pipeline should produce for this patient.
    pub fn to_entry(&self) -> CohortEntry {
        CohortEntry {
            patient_id: self.patient_id.clone(),
            onset_date: self.onset_date,
            onset_report_id: self.onset_report_id.clone(),
            label: self.label,
            exclusion: self.exclusion,
            merged: None,
        }
    }
}

const TRUTH_FIXED: [&str; 3] = ["patient_id", "onset_date", "label"];

/// `patient_id,onset_date,label,<cells>`; empty fields are missing.
pub fn write_truth(path: &Path, truth: &[TruthRecord], schema: &FeatureSchema) -> Result<()> {
    let err = |e| io::csv_write_error(path, e);
    let mut w = io::csv_writer(path)?;
    let header: Vec<&str> = TRUTH_FIXED.iter().copied().chain(schema.names()).collect();
    w.write_record(&header).map_err(err)?;
    for t in truth {
        if t.cells.len() != schema.len() {
            return Err(Error::WidthMismatch {
                expected: schema.len(),
                found: t.cells.len(),
            });
        }
        let mut rec = vec![
            t.patient_id.clone(),
            t.onset_date.map(|d| d.to_string()).unwrap_or_default(),
            t.label.map_or("", RecurrenceLabel::as_str).to_string(),
        ];
        rec.extend(t.cells.iter().map(|c| c.map(format_number).unwrap_or_default()));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `truth.csv` and the truth manifest from a corpus directory.
pub fn read_truth(dir: &Path, schema: &FeatureSchema) -> Result<Vec<TruthRecord>> {
    let manifest_path = dir.join(TRUTH_MANIFEST_FILE);
    let file = std::fs::File::open(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let exclusions: BTreeMap<String, Option<ExclusionReason>> = read_manifest(file)?
        .into_iter()
        .map(|e| (e.patient_id, e.exclusion))
        .collect();
    let path = dir.join(TRUTH_FILE);
    let mut rdr = io::open_csv(&path)?;
    let headers = rdr.headers().map_err(|e| io::csv_write_error(&path, e))?.clone();
    let expected: Vec<&str> = TRUTH_FIXED.iter().copied().chain(schema.names()).collect();
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::SchemaMismatch(format!("{} header does not match the schema", path.display())));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io::csv_write_error(&path, e))?;
        let pid = rec[0].to_string();
        let cells = (0..schema.len())
            .map(|j| {
                let s = &rec[TRUTH_FIXED.len() + j];
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::malformed(&pid, schema.column(j).name.clone(), s.to_string()))
                }
            })
            .collect::<Result<_>>()?;
        let exclusion = *exclusions
            .get(&pid)
            .ok_or_else(|| Error::malformed(&pid, "truth manifest", "patient missing".to_string()))?;
        let status = match exclusion {
            Some(ExclusionReason::NoAfCode) => PatientStatus::NoAfCode,
            Some(ExclusionReason::OnsetNotConfirmed) => PatientStatus::Unconfirmed,
            _ => PatientStatus::Confirmed,
        };
        out.push(TruthRecord {
            status,
            onset_date: match &rec[1] {
                "" => None,
                s => Some(io::parse_date(&pid, "onset_date", s)?),
            },
            onset_report_id: None,
            label: match &rec[2] {
                "" => None,
                s => Some(s.parse()?),
            },
            exclusion,
            cells,
            patient_id: pid,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Surface forms. Every phrase is matched by exactly one bundled rule.

/// Binary history columns: (column, prevalence, es, en, ICD-10 code).
const HISTORY: [(&str, f64, &str, &str, &str); 29] = [
    ("depression", 0.104, "síndrome depresivo", "depression", "F32.9"),
    ("alcohol", 0.147, "enolismo", "alcoholism", "F10.20"),
    ("drug_dependence", 0.02, "drogodependencia", "drug dependence", "F19.20"),
    ("anxiety", 0.09, "trastorno de ansiedad", "anxiety disorder", "F41.1"),
    ("dementia", 0.106, "deterioro cognitivo", "dementia", "F03.90"),
    ("renal_insufficiency", 0.194, "insuficiencia renal crónica", "chronic kidney disease", "N18.3"),
    ("menopause", 0.05, "menopausia", "menopause", "N95.1"),
    ("osteoporosis", 0.095, "osteoporosis", "osteoporosis", "M81.0"),
    ("smoking", 0.323, "tabaquismo", "smoking", "F17.210"),
    ("sahos", 0.071, "SAHOS", "obstructive sleep apnea", "G47.33"),
    ("hyperthyroidism", 0.043, "hipertiroidismo", "hyperthyroidism", "E05.90"),
    ("copd", 0.138, "EPOC", "COPD", "J44.9"),
    ("diabetes_type1", 0.05, "diabetes mellitus tipo 1", "type 1 diabetes mellitus", "E10.9"),
    ("diabetes_type2", 0.239, "diabetes mellitus tipo 2", "type 2 diabetes mellitus", "E11.9"),
    ("dyslipidemia", 0.269, "dislipemia", "dyslipidemia", "E78.5"),
    ("hypercholesterolemia", 0.373, "hipercolesterolemia", "hypercholesterolemia", "E78.00"),
    ("flutter", 0.198, "flutter auricular", "atrial flutter", "I48.92"),
    ("heart_failure", 0.519, "insuficiencia cardiaca", "heart failure", "I50.9"),
    ("metabolic_syndrome", 0.02, "síndrome metabólico", "metabolic syndrome", "E88.81"),
    ("hypertension", 0.78, "hipertensión arterial", "arterial hypertension", "I10"),
    ("ischemic_cardiomyopathy", 0.187, "cardiopatía isquémica", "ischemic heart disease", "I25.10"),
    ("stroke", 0.133, "ictus", "stroke", "I63.9"),
    ("myocardiopathy", 0.076, "miocardiopatía dilatada", "dilated cardiomyopathy", "I42.0"),
    ("branch_block", 0.182, "bloqueo de rama derecha", "right bundle branch block", "I45.10"),
    ("av_block", 0.057, "bloqueo auriculoventricular de primer grado", "first-degree AV block", "I44.0"),
    ("bradycardia", 0.064, "bradicardia sinusal", "sinus bradycardia", "R00.1"),
    ("premature_contractions", 0.142, "extrasístoles", "premature ventricular contractions", "I49.3"),
    ("sinus_node_dysfunction", 0.02, "enfermedad del nodo sinusal", "sick sinus syndrome", "I49.5"),
    ("peripheral_arteriopathy", 0.048, "arteriopatía periférica", "peripheral artery disease", "I73.9"),
];

/// Drug classes: (column, prevalence, es, en, ATC code).
const DRUGS: [(&str, f64, &str, &str, &str); 16] = [
    ("b01a", 0.9, "apixabán 5 mg cada 12 horas", "apixaban 5 mg twice daily", "B01AF02"),
    ("n02ba01", 0.05, "AAS 100 mg", "aspirin 100 mg", "N02BA01"),
    ("a02bc", 0.6, "omeprazol 20 mg", "omeprazole 20 mg", "A02BC01"),
    ("c03", 0.5, "furosemida 40 mg", "furosemide 40 mg", "C03CA01"),
    ("g03a", 0.01, "anticonceptivos orales", "oral contraceptives", "G03AA07"),
    ("a10", 0.3, "metformina 850 mg", "metformin 850 mg", "A10BA02"),
    ("n06a", 0.3, "sertralina 50 mg", "sertraline 50 mg", "N06AB06"),
    ("n05a", 0.15, "quetiapina 25 mg", "quetiapine 25 mg", "N05AH04"),
    ("n05b", 0.35, "lorazepam 1 mg", "lorazepam 1 mg", "N05BA06"),
    ("c01", 0.4, "amiodarona 200 mg", "amiodarone 200 mg", "C01BD01"),
    ("c02", 0.1, "doxazosina 4 mg", "doxazosin 4 mg", "C02CA04"),
    ("c04", 0.06, "cilostazol 100 mg", "cilostazol 100 mg", "C04AX"),
    ("c07", 0.6, "bisoprolol 2,5 mg", "bisoprolol 2.5 mg", "C07AB07"),
    ("c08", 0.3, "diltiazem 60 mg", "diltiazem 60 mg", "C08DB01"),
    ("c09", 0.6, "enalapril 10 mg", "enalapril 10 mg", "C09AA02"),
    ("c10", 0.5, "atorvastatina 20 mg", "atorvastatin 20 mg", "C10AA05"),
];

/// Valve columns: (column, es stem, en stem, value distribution for 0..).
const VALVES: [(&str, &str, &str, &[f64]); 5] = [
    ("mitral_insufficiency", "insuficiencia mitral", "mitral regurgitation", &[0.81, 0.144, 0.028, 0.012, 0.006]),
    ("mitral_stenosis", "estenosis mitral", "mitral stenosis", &[0.9, 0.06, 0.02, 0.01, 0.01]),
    ("aortic_stenosis", "estenosis aórtica", "aortic stenosis", &[0.85, 0.1, 0.03, 0.01, 0.01]),
    ("aortic_insufficiency", "insuficiencia aórtica", "aortic regurgitation", &[0.85, 0.13, 0.015, 0.005]),
    ("tricuspid_insufficiency", "insuficiencia tricuspídea", "tricuspid regurgitation", &[0.78, 0.2, 0.015, 0.005]),
];

const SEVERITY_ES: [&str; 5] = ["", "leve", "moderada", "severa", "crítica"];
const SEVERITY_EN: [&str; 5] = ["", "mild", "moderate", "severe", "critical"];

/// Labs: (column, es label, en label, mean, sd, lo, hi, decimals, LAB code).
const LABS: [(&str, &str, &str, f64, f64, f64, f64, usize, &str); 18] = [
    ("urea", "Urea", "Urea", 54.1, 32.07, 9.0, 298.0, 0, "UREA"),
    ("creatinine", "Creatinina", "Creatinine", 1.15, 0.8, 0.15, 9.65, 2, "CREA"),
    ("albumin", "Albúmina", "Albumin", 3.93, 0.5, 1.52, 7.8, 1, "ALB"),
    ("glucose", "Glucosa", "Glucose", 134.34, 56.56, 48.0, 824.0, 0, "GLU"),
    ("hba1c", "HbA1c", "HbA1c", 6.27, 1.1, 4.3, 13.7, 1, "HBA1C"),
    ("potassium", "Potasio", "Potassium", 4.29, 0.56, 2.34, 7.7, 1, "K"),
    ("calcium", "Calcio", "Calcium", 9.35, 0.84, 2.36, 19.9, 1, "CA"),
    ("hdl_cholesterol", "HDL-colesterol", "HDL cholesterol", 49.85, 18.0, 12.0, 145.0, 0, "HDL"),
    ("ldl_cholesterol", "LDL-colesterol", "LDL cholesterol", 117.92, 40.63, 25.0, 315.0, 0, "LDL"),
    ("non_hdl_cholesterol", "Colesterol no HDL", "Non-HDL cholesterol", 93.34, 36.74, 12.0, 344.0, 0, "NOHDL"),
    ("cholesterol", "Colesterol total", "Total cholesterol", 170.6, 44.66, 72.0, 380.0, 0, "CHOL"),
    ("ntprobnp", "NT-proBNP", "NT-proBNP", 3489.18, 4869.44, 59.34, 35144.0, 0, "NTPROBNP"),
    ("troponin_t", "Troponina T", "Troponin T", 57.31, 174.72, 5.0, 2823.0, 0, "TNT"),
    ("fibrinogen", "Fibrinógeno", "Fibrinogen", 440.89, 156.38, 120.0, 1200.0, 0, "FIB"),
    ("leukocytes", "Leucocitos", "Leukocytes", 10.44, 23.92, 1.4, 500.0, 1, "LEUC"),
    ("crp", "PCR", "CRP", 4.08, 4.7, 0.1, 20.0, 1, "CRP"),
    ("tsh", "TSH", "TSH", 2.13, 1.63, 0.01, 13.52, 2, "TSH"),
    ("sodium", "Sodio", "Sodium", 140.08, 3.97, 104.0, 165.0, 0, "NA"),
];

const DISTRACTORS_ES: [&str; 6] = [
    "Refiere cansancio de varias semanas de evolución.",
    "Buena tolerancia a la vía oral.",
    "Se realiza control de la frecuencia cardiaca durante el ingreso.",
    "Acude acompañada por su familia.",
    "Se explica el plan terapéutico a la paciente.",
    "Permanece estable durante la estancia.",
];

const DISTRACTORS_EN: [&str; 6] = [
    "Reports several weeks of fatigue.",
    "Tolerating oral intake well.",
    "Heart rate control was achieved during the stay.",
    "Attends accompanied by relatives.",
    "The treatment plan was explained to the patient.",
    "Remained stable during the admission.",
];

// ---------------------------------------------------------------------------
// Rendering helpers.

struct Writer {
    lang: Language,
    sections: Vec<(String, Vec<String>)>,
}

impl Writer {
    fn new(lang: Language) -> Self {
        Writer {
            lang,
            sections: Vec::new(),
        }
    }

    fn t<'a>(&self, es: &'a str, en: &'a str) -> &'a str {
        match self.lang {
            Language::Es => es,
            Language::En => en,
        }
    }

    fn section(&mut self, es: &str, en: &str, lines: Vec<String>) {
        if !lines.is_empty() {
            let h = self.t(es, en).to_string();
            self.sections.push((h, lines));
        }
    }

    fn finish(self) -> String {
        let mut s = String::new();
        for (h, lines) in self.sections {
            s.push_str(&h);
            s.push_str(":\n");
            for l in lines {
                s.push_str(&l);
                s.push('\n');
            }
        }
        s
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Renders `v` with `decimals` places in the report language and returns the
/// text together with the value a reader recovers from it.
fn number(v: f64, decimals: usize, lang: Language) -> (String, f64) {
    let s = format!("{v:.decimals$}");
    let value: f64 = s.parse().expect("formatted number parses");
    let text = match lang {
        Language::Es => s.replace('.', ","),
        Language::En => s,
    };
    (text, value)
}

fn truncated_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let d = Normal::new(mean, sd).expect("valid normal");
    for _ in 0..1000 {
        let x = d.sample(rng);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    mean.clamp(lo, hi)
}

fn sample_discrete(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

fn negation(lang: Language, rng: &mut ChaCha8Rng, term: &str) -> String {
    let cue = match lang {
        Language::Es => ["Niega", "No", "Sin"][rng.random_range(0..3)],
        Language::En => ["Denies", "No history of", "No evidence of"][rng.random_range(0..3)],
    };
    format!("{cue} {term}.")
}

fn join_list(lang: Language, items: &[String]) -> String {
    let conj = match lang {
        Language::Es => " y ",
        Language::En => " and ",
    };
    match items {
        [] => String::new(),
        [one] => format!("{}.", capitalize(one)),
        [init @ .., last] => format!("{}{conj}{last}.", capitalize(&init.join(", "))),
    }
}

// ---------------------------------------------------------------------------
// Planning.

#[derive(Debug, Clone)]
struct Plan {
    index: usize,
    patient_id: String,
    status: PatientStatus,
    female: bool,
    age: u32,
    onset: NaiveDate,
    label: Option<RecurrenceLabel>,
    early_death: bool,
    exclusion: Option<ExclusionReason>,
}

fn plan(config: &GeneratorConfig) -> Vec<Plan> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let base = NaiveDate::from_ymd_opt(2012, 1, 1).expect("valid date");
    let mut plans: Vec<Plan> = (0..config.patients)
        .map(|i| {
            let u: f64 = rng.random();
            let status = if u < config.no_af_code_rate {
                PatientStatus::NoAfCode
            } else if u < config.no_af_code_rate + config.unconfirmed_rate {
                PatientStatus::Unconfirmed
            } else {
                PatientStatus::Confirmed
            };
            let female = rng.random_bool(config.female_fraction);
            let mean = if female { config.age_mean_female } else { config.age_mean_male };
            let age = truncated_normal(&mut rng, mean, config.age_sd, 18.0, 103.0).round() as u32;
            let onset = base + Days::new(rng.random_range(0..3000));
            let early_death = rng.random_bool(config.early_death_rate);
            let discard = rng.random_bool(config.discard_rate);
            let mut exclusion = match status {
                PatientStatus::NoAfCode => Some(ExclusionReason::NoAfCode),
                PatientStatus::Unconfirmed => Some(ExclusionReason::OnsetNotConfirmed),
                PatientStatus::Confirmed => None,
            };
            let mut label = None;
            if status == PatientStatus::Confirmed {
                if f64::from(age) > crate::cohort_builder::MAX_AGE {
                    exclusion = Some(ExclusionReason::AgeOver90);
                } else if early_death {
                    exclusion = Some(ExclusionReason::EarlyDeath);
                }
                label = Some(if early_death || discard {
                    RecurrenceLabel::Discarded
                } else {
                    // Provisional; final labels of dataset patients are
                    // assigned by quota below.
                    RecurrenceLabel::NoRecurrence
                });
            }
            Plan {
                index: i,
                patient_id: format!("P{:05}", i + 1),
                status,
                female,
                age,
                onset,
                label,
                early_death: status == PatientStatus::Confirmed && early_death,
                exclusion,
            }
        })
        .collect();
    // Exact recurrence quota among dataset patients; excluded patients draw
    // their labels independently.
    let mut dataset: Vec<usize> = plans
        .iter()
        .filter(|p| p.exclusion.is_none() && p.label == Some(RecurrenceLabel::NoRecurrence))
        .map(|p| p.index)
        .collect();
    dataset.shuffle(&mut rng);
    let quota = (config.prevalence * dataset.len() as f64).round() as usize;
    for &i in &dataset[..quota] {
        plans[i].label = Some(RecurrenceLabel::Recurred);
    }
    for p in plans.iter_mut() {
        if p.exclusion == Some(ExclusionReason::AgeOver90) && !p.early_death && p.label != Some(RecurrenceLabel::Discarded) {
            p.label = Some(if rng.random_bool(config.prevalence) {
                RecurrenceLabel::Recurred
            } else {
                RecurrenceLabel::NoRecurrence
            });
        }
    }
    plans
}

// ---------------------------------------------------------------------------
// Rendering one patient.

struct Out {
    reports: Vec<DischargeReport>,
    coded: Vec<CodedRecord>,
    death: Option<NaiveDate>,
    truth: TruthRecord,
}

struct Ctx<'a> {
    config: &'a GeneratorConfig,
    schema: &'a FeatureSchema,
    lang: Language,
    rng: ChaCha8Rng,
    pid: String,
    coded: Vec<CodedRecord>,
    report_count: usize,
}

impl Ctx<'_> {
    fn col(&self, name: &str) -> usize {
        self.schema.require(name).expect("generator column exists in the schema")
    }

    fn t<'b>(&self, es: &'b str, en: &'b str) -> &'b str {
        match self.lang {
            Language::Es => es,
            Language::En => en,
        }
    }

    fn code(&mut self, date: NaiveDate, system: CodeSystem, code: &str, value: Option<f64>) {
        self.coded.push(CodedRecord {
            patient_id: self.pid.clone(),
            date,
            code_system: system,
            code: code.to_string(),
            value,
            unit: None,
        });
    }

    fn report(&mut self, date: NaiveDate, body: String) -> DischargeReport {
        self.report_count += 1;
        DischargeReport {
            report_id: format!("{}-R{:02}", self.pid, self.report_count),
            patient_id: self.pid.clone(),
            date,
            body,
        }
    }

    fn distractor(&mut self) -> String {
        let i = self.rng.random_range(0..DISTRACTORS_ES.len());
        self.t(DISTRACTORS_ES[i], DISTRACTORS_EN[i]).to_string()
    }

    /// Channels for one fact: (in text, in coded data).
    fn channels(&mut self, p_coded: f64) -> (bool, bool) {
        let coded = self.rng.random_bool(p_coded);
        let text = !coded || !self.rng.random_bool(self.config.coded_only_rate);
        (text, coded)
    }

    fn lab_line(&mut self, values: &[(usize, f64)]) -> Option<String> {
        if values.is_empty() {
            return None;
        }
        let parts: Vec<String> = values
            .iter()
            .map(|&(i, v)| {
                let (_, es, en, .., dec, _) = LABS[i];
                format!("{}: {}", self.t(es, en), number(v, dec, self.lang).0)
            })
            .collect();
        Some(format!("{}: {}.", self.t("Analítica", "Blood tests"), parts.join("; ")))
    }

    /// Random lab values for reports outside the lab window.
    fn distractor_labs(&mut self) -> Option<String> {
        let mut vals = Vec::new();
        for (i, lab) in LABS.iter().enumerate() {
            if self.rng.random_bool(0.2) {
                let v = truncated_normal(&mut self.rng, lab.3, lab.4, lab.5, lab.6);
                vals.push((i, v));
            }
        }
        self.lab_line(&vals)
    }
}

#[derive(Default)]
struct Prior {
    date: Option<NaiveDate>,
    history: Vec<String>,
    negated: Vec<String>,
    drugs: Vec<String>,
}

fn render_patient(config: &GeneratorConfig, schema: &FeatureSchema, p: &Plan) -> Out {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(p.index as u64 + 1);
    let mut ctx = Ctx {
        config,
        schema,
        lang: config.language,
        rng,
        pid: p.patient_id.clone(),
        coded: Vec::new(),
        report_count: 0,
    };
    match p.status {
        PatientStatus::Confirmed => render_confirmed(&mut ctx, p),
        _ => render_unconfirmed(&mut ctx, p),
    }
}

fn empty_truth(p: &Plan, width: usize) -> TruthRecord {
    TruthRecord {
        patient_id: p.patient_id.clone(),
        status: p.status,
        onset_date: None,
        onset_report_id: None,
        label: None,
        exclusion: p.exclusion,
        cells: vec![None; width],
    }
}

/// Patients without an AF code or without a qualifying onset report.
fn render_unconfirmed(ctx: &mut Ctx<'_>, p: &Plan) -> Out {
    let date = p.onset;
    let mut reports = Vec::new();
    // I48.92 (flutter) would pass the AF code filter.
    let choices: Vec<usize> = (0..HISTORY.len()).filter(|&i| !HISTORY[i].4.starts_with("I48")).collect();
    let (_, _, es, en, icd) = HISTORY[choices[ctx.rng.random_range(0..choices.len())]];
    let term = ctx.t(es, en).to_string();
    ctx.code(date, CodeSystem::Icd10, icd, None);
    let af_es = "Fibrilación auricular";
    let af_en = "Atrial fibrillation";
    match p.status {
        PatientStatus::NoAfCode => {
            // Text may still mention AF; only the code filter rejects them.
            let mut w = Writer::new(ctx.lang);
            w.section("Antecedentes", "Past medical history", vec![format!("{}.", capitalize(&term))]);
            let dx = if ctx.rng.random_bool(0.5) {
                format!("{}.", ctx.t(af_es, af_en))
            } else {
                ctx.distractor()
            };
            w.section("Diagnóstico principal", "Discharge diagnosis", vec![dx]);
            let body = w.finish();
            reports.push(ctx.report(date, body));
        }
        _ => {
            ctx.code(date, CodeSystem::Icd10, "I48.91", None);
            match ctx.rng.random_range(0..3) {
                0 => {
                    // Known AF: a recurrence candidate, not an onset.
                    let mut w = Writer::new(ctx.lang);
                    w.section(
                        "Antecedentes",
                        "Past medical history",
                        vec![format!("{}.", ctx.t("Fibrilación auricular paroxística conocida", "Known paroxysmal atrial fibrillation"))],
                    );
                    w.section("Diagnóstico principal", "Discharge diagnosis", vec![format!("{}.", ctx.t(af_es, af_en))]);
                    let body = w.finish();
                    reports.push(ctx.report(date, body));
                }
                1 => {
                    let mut w = Writer::new(ctx.lang);
                    w.section(
                        "Pruebas complementarias",
                        "Complementary tests",
                        vec![ctx.t("ECG: ritmo sinusal.", "ECG: sinus rhythm.").to_string()],
                    );
                    w.section(
                        "Diagnóstico principal",
                        "Discharge diagnosis",
                        vec![ctx
                            .t("Palpitaciones. No se objetiva fibrilación auricular.", "Palpitations. No evidence of atrial fibrillation.")
                            .to_string()],
                    );
                    let body = w.finish();
                    reports.push(ctx.report(date, body));
                }
                _ => {}
            }
        }
    }
    Out {
        reports,
        coded: std::mem::take(&mut ctx.coded),
        death: None,
        truth: empty_truth(p, ctx.schema.len()),
    }
}

fn render_confirmed(ctx: &mut Ctx<'_>, p: &Plan) -> Out {
    let schema = ctx.schema;
    let lang = ctx.lang;
    let d0 = p.onset;
    let mut cells: Vec<Option<f64>> = vec![None; schema.len()];
    let recurred = p.label == Some(RecurrenceLabel::Recurred);
    let signal = if recurred { ctx.config.signal } else { 0.0 };

    // Prior reports, oldest first.
    let n_prior = sample_discrete(&mut ctx.rng, &[0.3, 0.4, 0.3]);
    let mut offsets: Vec<u64> = (0..n_prior).map(|_| ctx.rng.random_range(200..=1500)).collect();
    offsets.sort_unstable_by(|a, b| b.cmp(a));
    let mut priors: Vec<Prior> = offsets
        .iter()
        .map(|&o| Prior {
            date: Some(d0 - Days::new(o)),
            ..Prior::default()
        })
        .collect();

    // Onset report pieces.
    let mut pmh_affirmed: Vec<String> = Vec::new();
    let mut pmh_negated: Vec<String> = Vec::new();
    let mut treatment: Vec<String> = Vec::new();

    // Demographics.
    let gender = ctx.col("gender");
    let age = ctx.col("age");
    cells[gender] = Some(if p.female { 1.0 } else { 0.0 });
    cells[age] = Some(f64::from(p.age));
    for (code, v) in [("SEX", cells[gender]), ("AGE", cells[age])] {
        if ctx.rng.random_bool(0.9) {
            ctx.code(d0, CodeSystem::Demog, code, v);
        }
    }
    let intro = match (lang, p.female) {
        (Language::Es, true) => format!("Mujer de {} años.", p.age),
        (Language::Es, false) => format!("Varón de {} años.", p.age),
        (Language::En, true) => format!("{}-year-old woman.", p.age),
        (Language::En, false) => format!("{}-year-old male patient.", p.age),
    };
    let mut demo_lines = vec![intro];
    for (name, prob, es_f, es_m, en, code) in [
        ("pensioner", 0.85, "Jubilada.", "Jubilado.", "Retired.", "PENSIONER"),
        ("resident", 0.126, "Vive en residencia.", "Vive en residencia.", "Lives in a nursing home.", "RESIDENT"),
    ] {
        let col = ctx.col(name);
        if ctx.rng.random_bool(prob) {
            let (text, coded) = ctx.channels(0.5);
            cells[col] = Some(1.0);
            if text {
                demo_lines.push(ctx.t(if p.female { es_f } else { es_m }, en).to_string());
            }
            if coded {
                ctx.code(d0, CodeSystem::Demog, code, None);
            }
        } else if ctx.rng.random_bool(0.4) {
            cells[col] = Some(0.0);
            let neg = match (name, lang) {
                ("pensioner", Language::Es) => "No jubilad".to_string() + if p.female { "a." } else { "o." },
                ("pensioner", Language::En) => "Not retired.".to_string(),
                (_, Language::Es) => "No institucionalizad".to_string() + if p.female { "a." } else { "o." },
                (_, Language::En) => "Not institutionalized.".to_string(),
            };
            demo_lines.push(neg);
        }
    }

    // Binary history.
    for &(name, prev, es, en, icd) in &HISTORY {
        if (name == "menopause") && !p.female {
            continue;
        }
        let col = ctx.col(name);
        let term = ctx.t(es, en).to_string();
        let mut prev = prev;
        if name == "flutter" || name == "hypertension" {
            prev = (prev + 0.15 * signal).min(0.95);
        }
        if ctx.rng.random_bool(prev) {
            cells[col] = Some(1.0);
            let (text, coded) = ctx.channels(0.85);
            let mut code_date = d0;
            if text {
                if !priors.is_empty() && ctx.rng.random_bool(0.35) {
                    let k = ctx.rng.random_range(0..priors.len());
                    priors[k].history.push(term);
                    code_date = priors[k].date.expect("prior date");
                } else {
                    pmh_affirmed.push(term);
                }
            } else if !priors.is_empty() && ctx.rng.random_bool(0.5) {
                code_date = priors[ctx.rng.random_range(0..priors.len())].date.expect("prior date");
            }
            if coded {
                ctx.code(code_date, CodeSystem::Icd10, icd, None);
            }
        } else if ctx.rng.random_bool(0.25) {
            cells[col] = Some(0.0);
            if !priors.is_empty() && ctx.rng.random_bool(0.3) {
                let k = ctx.rng.random_range(0..priors.len());
                priors[k].negated.push(term);
            } else {
                pmh_negated.push(term);
            }
        }
    }

    // Drugs.
    for &(name, prev, es, en, atc) in &DRUGS {
        if name == "g03a" && !p.female {
            continue;
        }
        let col = ctx.col(name);
        if !ctx.rng.random_bool(prev) {
            continue;
        }
        cells[col] = Some(1.0);
        let term = ctx.t(es, en).to_string();
        let (text, coded) = ctx.channels(0.85);
        let mut code_date = d0;
        if text {
            if !priors.is_empty() && ctx.rng.random_bool(0.3) {
                let k = ctx.rng.random_range(0..priors.len());
                priors[k].drugs.push(term);
                code_date = priors[k].date.expect("prior date");
            } else {
                treatment.push(term);
            }
        }
        if coded {
            ctx.code(code_date, CodeSystem::Atc, atc, None);
        }
    }

    // Labs.
    let mut onset_labs: Vec<(usize, f64)> = Vec::new();
    for (i, &(name, .., mean, sd, lo, hi, dec, code)) in LABS.iter().enumerate() {
        if !ctx.rng.random_bool(0.7) {
            continue;
        }
        let mean = if name == "ntprobnp" { mean * (1.0 + 0.4 * signal) } else { mean };
        let raw = truncated_normal(&mut ctx.rng, mean, sd, lo, hi);
        let (_, v) = number(raw, dec, lang);
        cells[ctx.col(name)] = Some(v);
        let (text, coded) = ctx.channels(0.9);
        if text {
            onset_labs.push((i, v));
        }
        if coded {
            let date = if text {
                d0
            } else {
                let off: i64 = ctx.rng.random_range(-7..=7);
                d0 + chrono::Duration::days(off)
            };
            ctx.code(date, CodeSystem::Lab, code, Some(v));
        }
    }

    // Exploration.
    let mut exploration: Vec<String> = Vec::new();
    if ctx.rng.random_bool(0.6) {
        let weight = number(truncated_normal(&mut ctx.rng, 75.0, 16.09, 40.3, 153.2), 1, lang);
        let cm = truncated_normal(&mut ctx.rng, 161.0, 10.0, 135.0, 190.0).round();
        let height_text;
        let height = match lang {
            Language::Es => {
                let (t, v) = number(cm / 100.0, 2, lang);
                height_text = format!("Talla: {t} m.");
                v
            }
            Language::En => {
                height_text = format!("Height: {cm} cm.");
                cm / 100.0
            }
        };
        let bmi = number((weight.1 / (height * height)).clamp(16.4, 58.04), 1, lang);
        let parts = [
            ("weight", "WEIGHT", weight.1, format!("{}: {} kg.", ctx.t("Peso", "Weight"), weight.0)),
            ("height", "HEIGHT", height, height_text),
            ("bmi", "BMI", bmi.1, format!("{}: {}.", ctx.t("IMC", "BMI"), bmi.0)),
        ];
        for (name, code, v, text_part) in parts {
            cells[ctx.col(name)] = Some(v);
            let (text, coded) = ctx.channels(0.85);
            if text {
                exploration.push(text_part);
            }
            if coded {
                ctx.code(d0, CodeSystem::Demog, code, Some(v));
            }
        }
    }
    exploration.insert(0, ctx.distractor());

    // Echo and valves.
    let mut echo_parts: Vec<String> = Vec::new();
    let has_echo = ctx.rng.random_bool(0.45);
    let echo_col = ctx.col("echocardiogram");
    let mut tests: Vec<String> = Vec::new();
    if has_echo {
        cells[echo_col] = Some(1.0);
        if ctx.rng.random_bool(0.85) {
            ctx.code(d0, CodeSystem::Proc, "ECHO01", None);
        }
        if ctx.rng.random_bool(0.9) {
            let v = truncated_normal(&mut ctx.rng, 54.89 - 4.0 * signal, 12.27, 10.0, 84.0).round();
            cells[ctx.col("lvef")] = Some(v);
            echo_parts.push(format!("{} {v}%", ctx.t("FEVI", "LVEF")));
        }
        if ctx.rng.random_bool(0.7) {
            let v = truncated_normal(&mut ctx.rng, 42.04 + 6.0 * signal, 11.73, 14.0, 90.0).round();
            cells[ctx.col("la_diameter")] = Some(v);
            echo_parts.push(format!("{} {v} mm", ctx.t("diámetro AI", "LA diameter")));
        }
        if ctx.rng.random_bool(0.4) {
            let (t, v) = number(truncated_normal(&mut ctx.rng, 29.02, 5.37, 18.5, 45.0), 1, lang);
            cells[ctx.col("la_area")] = Some(v);
            echo_parts.push(format!("{} {t} cm2", ctx.t("área AI", "LA area")));
        }
        if ctx.rng.random_bool(0.6) {
            let v = sample_discrete(&mut ctx.rng, &[0.4, 0.3, 0.2, 0.1]);
            cells[ctx.col("la_size")] = Some(v as f64);
            let es = [
                "aurícula izquierda de tamaño normal",
                "aurícula izquierda levemente dilatada",
                "aurícula izquierda moderadamente dilatada",
                "aurícula izquierda severamente dilatada",
            ];
            let en = [
                "normal-sized left atrium",
                "mildly dilated left atrium",
                "moderately dilated left atrium",
                "severely dilated left atrium",
            ];
            echo_parts.push(ctx.t(es[v], en[v]).to_string());
        }
    } else if ctx.rng.random_bool(0.2) {
        cells[echo_col] = Some(0.0);
        tests.push(ctx.t("No se realizó ecocardiograma.", "No echocardiogram was performed.").to_string());
    }
    for &(name, es, en, dist) in &VALVES {
        if !ctx.rng.random_bool(0.5) {
            continue;
        }
        let v = sample_discrete(&mut ctx.rng, dist);
        cells[ctx.col(name)] = Some(v as f64);
        let stem = ctx.t(es, en);
        let phrase = if v == 0 {
            None
        } else {
            Some(match lang {
                Language::Es => format!("{stem} {}", SEVERITY_ES[v]),
                Language::En => format!("{} {stem}", SEVERITY_EN[v]),
            })
        };
        match (phrase, has_echo) {
            (Some(ph), true) => echo_parts.push(ph),
            (Some(ph), false) => pmh_affirmed.push(ph),
            (None, true) => echo_parts.push(format!("{} {stem}", ctx.t("sin", "no"))),
            (None, false) => pmh_negated.push(stem.to_string()),
        }
    }

    // AF flags and the onset statement.
    let af_code = [af_type::UNSPECIFIED, af_type::PAROXYSMAL, af_type::PERSISTENT, af_type::PERMANENT]
        [sample_discrete(&mut ctx.rng, &[0.6, 0.25, 0.05, 0.1])];
    cells[ctx.col(NEW_AF_DIAGNOSIS)] = Some(1.0);
    cells[ctx.col(PRIOR_AF_IN_HISTORY)] = Some(0.0);
    cells[ctx.col(POTENTIAL_RECURRENCE)] = Some(0.0);
    cells[ctx.col(AF_TYPE)] = Some(f64::from(af_code));
    cells[ctx.col("electrocardiogram")] = Some(1.0);
    let abbreviate = ctx.rng.random_bool(0.3);
    let af_term = match (lang, abbreviate) {
        (Language::Es, false) => "fibrilación auricular",
        (Language::Es, true) => "FA",
        (Language::En, false) => "atrial fibrillation",
        (Language::En, true) => "AF",
    };
    let dx = match (lang, af_code) {
        (Language::Es, af_type::PAROXYSMAL) => format!("{} paroxística.", capitalize(af_term)),
        (Language::Es, af_type::PERSISTENT) => format!("{} persistente.", capitalize(af_term)),
        (Language::Es, af_type::PERMANENT) => format!("{} permanente.", capitalize(af_term)),
        (Language::Es, _) => format!("{} de reciente diagnóstico.", capitalize(af_term)),
        (Language::En, af_type::PAROXYSMAL) => format!("Paroxysmal {af_term}."),
        (Language::En, af_type::PERSISTENT) => format!("Persistent {af_term}."),
        (Language::En, af_type::PERMANENT) => format!("Permanent {af_term}."),
        (Language::En, _) => format!("New-onset {af_term}."),
    };
    let ecg = if ctx.rng.random_bool(0.8) {
        ctx.t(
            "ECG: fibrilación auricular con respuesta ventricular rápida.",
            "ECG: atrial fibrillation with rapid ventricular response.",
        )
    } else {
        ctx.t("ECG: ritmo irregular a 120 lpm.", "ECG: irregular rhythm at 120 bpm.")
    };
    tests.insert(0, ecg.to_string());
    if ctx.rng.random_bool(0.85) {
        ctx.code(d0, CodeSystem::Proc, "ECG01", None);
    }
    ctx.code(d0, CodeSystem::Icd10, ["I48.91", "I48.0", "I48.1", "I48.2"][af_code as usize], None);
    if let Some(l) = ctx.lab_line(&onset_labs) {
        tests.push(l);
    }
    if !echo_parts.is_empty() {
        // Commas end negation scope, so "sin X" cannot reach later findings.
        tests.push(format!("{}: {}.", ctx.t("Ecocardiograma", "Echocardiogram"), echo_parts.join(", ")));
    }

    // Render prior reports.
    let mut reports = Vec::new();
    for prior in &priors {
        let date = prior.date.expect("prior date");
        let mut w = Writer::new(lang);
        let reason = ctx.t("Revisión programada.", "Scheduled review.").to_string();
        w.section("Motivo de consulta", "Reason for consultation", vec![reason]);
        let mut pmh = Vec::new();
        if !prior.history.is_empty() {
            pmh.push(join_list(lang, &prior.history));
        }
        for n in &prior.negated {
            pmh.push(negation(lang, &mut ctx.rng, n));
        }
        w.section("Antecedentes", "Past medical history", pmh);
        let mut t = Vec::new();
        if let Some(l) = ctx.distractor_labs() {
            t.push(l);
        }
        t.push(ctx.t("ECG: ritmo sinusal.", "ECG: sinus rhythm.").to_string());
        if ctx.rng.random_bool(0.3) {
            let v = ctx.rng.random_range(35..70);
            t.push(format!("{}: {} {v}%.", ctx.t("Ecocardiograma", "Echocardiogram"), ctx.t("FEVI", "LVEF")));
        }
        w.section("Pruebas complementarias", "Complementary tests", t);
        let dx = ctx.t("Control de factores de riesgo cardiovascular.", "Cardiovascular risk factor review.").to_string();
        w.section("Diagnóstico", "Diagnosis", vec![dx]);
        if !prior.drugs.is_empty() {
            let drugs = prior.drugs.iter().map(|d| format!("{}.", capitalize(d))).collect();
            w.section("Tratamiento", "Treatment", drugs);
        }
        let body = w.finish();
        reports.push(ctx.report(date, body));
    }

    // Render the onset report.
    let mut w = Writer::new(lang);
    let reason = ctx.t("Palpitaciones y disnea de esfuerzo.", "Palpitations and exertional dyspnea.").to_string();
    w.section("Motivo de ingreso", "Reason for admission", vec![reason]);
    let mut pmh = vec![demo_lines.join(" ")];
    if !pmh_affirmed.is_empty() {
        pmh.push(join_list(lang, &pmh_affirmed));
    }
    for n in &pmh_negated {
        pmh.push(negation(lang, &mut ctx.rng, n));
    }
    w.section("Antecedentes personales", "Past medical history", pmh);
    let current = vec![
        ctx.t("Cuadro de palpitaciones de inicio brusco.", "Sudden-onset palpitations.").to_string(),
        ctx.distractor(),
    ];
    w.section("Enfermedad actual", "Present illness", current);
    w.section("Exploración física", "Physical examination", exploration);
    w.section("Pruebas complementarias", "Complementary tests", tests);
    let evolution = vec![ctx.distractor()];
    w.section("Evolución", "Hospital course", evolution);
    w.section("Diagnóstico principal", "Discharge diagnosis", vec![dx]);
    let drugs: Vec<String> = treatment.iter().map(|d| format!("{}.", capitalize(d))).collect();
    w.section("Tratamiento al alta", "Discharge medication", drugs);
    let body = w.finish();
    let onset_report = ctx.report(d0, body);
    let onset_report_id = onset_report.report_id.clone();
    reports.push(onset_report);

    // Death.
    let death = if p.early_death {
        Some(d0 + Days::new(ctx.rng.random_range(1..=crate::cohort_builder::EARLY_DEATH_DAYS)))
    } else if ctx.rng.random_bool(0.08) {
        Some(d0 + Days::new(ctx.rng.random_range(crate::cohort_builder::EARLY_DEATH_DAYS + 1..=1500)))
    } else {
        None
    };

    // Follow-ups.
    if !p.early_death {
        for (offset, kind) in followup_plan(&mut ctx.rng, p.label.expect("confirmed patients carry a label")) {
            let date = d0 + Days::new(offset);
            let body = render_followup(ctx, kind, offset);
            if kind == FollowUp::Af && ctx.rng.random_bool(0.7) {
                ctx.code(date, CodeSystem::Icd10, "I48.91", None);
            }
            reports.push(ctx.report(date, body));
        }
    }

    let truth = TruthRecord {
        patient_id: p.patient_id.clone(),
        status: p.status,
        onset_date: Some(d0),
        onset_report_id: Some(onset_report_id),
        label: p.label,
        exclusion: p.exclusion,
        cells,
    };
    Out {
        reports,
        coded: std::mem::take(&mut ctx.coded),
        death,
        truth,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FollowUp {
    /// AF stated in the diagnosis or tests of a known-AF patient.
    Af,
    Sinus,
    Unrelated,
}

fn window_offset(rng: &mut ChaCha8Rng) -> u64 {
    match rng.random_range(0..10) {
        0 => 31,
        1 => 730,
        _ => rng.random_range(31..=730),
    }
}

fn followup_plan(rng: &mut ChaCha8Rng, label: RecurrenceLabel) -> Vec<(u64, FollowUp)> {
    let mut out = Vec::new();
    if rng.random_bool(0.3) {
        let off = if rng.random_bool(0.2) { 30 } else { rng.random_range(1..=30) };
        out.push((off, FollowUp::Af));
    }
    if rng.random_bool(0.2) {
        let off = if rng.random_bool(0.2) { 731 } else { rng.random_range(731..=1100) };
        out.push((off, FollowUp::Af));
    }
    match label {
        RecurrenceLabel::Recurred => {
            out.push((window_offset(rng), FollowUp::Af));
            if rng.random_bool(0.3) {
                out.push((window_offset(rng), FollowUp::Sinus));
            }
        }
        RecurrenceLabel::NoRecurrence => {
            for _ in 0..rng.random_range(1..=2) {
                out.push((window_offset(rng), FollowUp::Sinus));
            }
        }
        RecurrenceLabel::Discarded => {}
    }
    if rng.random_bool(0.3) {
        out.push((window_offset(rng), FollowUp::Unrelated));
    }
    out.sort_unstable_by_key(|&(o, _)| o);
    out
}

fn render_followup(ctx: &mut Ctx<'_>, kind: FollowUp, offset: u64) -> String {
    let mut w = Writer::new(ctx.lang);
    let known = [
        ("Fibrilación auricular paroxística conocida.", "Known paroxysmal atrial fibrillation."),
        ("FA diagnosticada previamente.", "Previously diagnosed AF."),
    ][ctx.rng.random_range(0..2)];
    let reason = match kind {
        FollowUp::Af => ctx.t("Palpitaciones.", "Palpitations."),
        FollowUp::Sinus => ctx.t("Revisión en consultas de cardiología.", "Cardiology outpatient review."),
        FollowUp::Unrelated => ctx.t("Caída casual en domicilio.", "Accidental fall at home."),
    }
    .to_string();
    w.section("Motivo de ingreso", "Reason for admission", vec![reason]);
    w.section("Antecedentes", "Past medical history", vec![ctx.t(known.0, known.1).to_string()]);
    let mut tests = Vec::new();
    let dx;
    match kind {
        FollowUp::Af => {
            tests.push(ctx.t("ECG: fibrilación auricular.", "ECG: atrial fibrillation.").to_string());
            dx = ctx.t("Recurrencia de fibrilación auricular.", "Recurrent atrial fibrillation.").to_string();
        }
        FollowUp::Sinus => {
            let ecg = [("ECG: ritmo sinusal.", "ECG: sinus rhythm."), ("ECG sin FA.", "ECG without AF.")]
                [ctx.rng.random_range(0..2)];
            tests.push(ctx.t(ecg.0, ecg.1).to_string());
            dx = ctx
                .t("Mantiene ritmo sinusal. No se objetiva fibrilación auricular.", "Remains in sinus rhythm. No evidence of atrial fibrillation.")
                .to_string();
        }
        FollowUp::Unrelated => {
            dx = ctx.t("Contusión en rodilla derecha.", "Right knee contusion.").to_string();
        }
    }
    if offset > crate::cohort_builder::EARLY_DEATH_DAYS {
        if let Some(l) = ctx.distractor_labs() {
            tests.push(l);
        }
    }
    w.section("Pruebas complementarias", "Complementary tests", tests);
    w.section("Diagnóstico", "Diagnosis", vec![dx]);
    w.finish()
}

// ---------------------------------------------------------------------------

/// Generates a corpus. Output order is by patient, then date.
pub fn generate(config: &GeneratorConfig, schema: &FeatureSchema) -> Result<SyntheticCorpus> {
    config.validate()?;
    schema.require_af_flags()?;
    for name in HISTORY.iter().map(|h| h.0).chain(DRUGS.iter().map(|d| d.0)).chain(LABS.iter().map(|l| l.0)) {
        schema.require(name)?;
    }
    let plans = plan(config);
    let outs: Vec<Out> = plans.par_iter().map(|p| render_patient(config, schema, p)).collect();
    let mut corpus = SyntheticCorpus {
        reports: Vec::new(),
        coded: Vec::new(),
        deaths: BTreeMap::new(),
        truth: Vec::new(),
    };
    for o in outs {
        corpus.reports.extend(o.reports);
        let mut coded = o.coded;
        coded.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        corpus.coded.extend(coded);
        if let Some(d) = o.death {
            corpus.deaths.insert(o.truth.patient_id.clone(), d);
        }
        corpus.truth.push(o.truth);
    }
    if config.corruption_rate > 0.0 {
        corpus.coded = corrupt_records(
            &corpus.coded,
            &Corruption {
                drop_rate: config.corruption_rate,
                corrupt_rate: 0.0,
                seed: config.seed,
            },
        )?;
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resources::canonical_schema;

    #[test]
    fn numbers_round_trip_through_text() {
        let (t, v) = number(1.2345, 2, Language::Es);
        assert_eq!(t, "1,23");
        assert_eq!(v, 1.23);
    }

    #[test]
    fn same_seed_same_corpus() {
        let schema = canonical_schema();
        let c = GeneratorConfig::new(30, 5);
        assert_eq!(generate(&c, &schema).unwrap(), generate(&c, &schema).unwrap());
    }

    #[test]
    fn rejects_degenerate_prevalence() {
        let mut c = GeneratorConfig::new(10, 1);
        c.prevalence = 1.0;
        assert!(c.validate().is_err());
    }
}
