//! Corpus to cohort to dataset: the per-patient chain of code filtering,
//! onset confirmation, vectorization, onset-anchored merging, labeling and
//! exclusions, followed by a stratified train/test split.
//!
//! Patients are processed in parallel and reassembled in patient-id order, so
//! results do not depend on the worker count.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::clinical_scores::{bundled_scores, Score, ScoreDefinition};
use crate::cohort_builder::{
    apply_exclusions, confirm_onset, filter_patients, label_recurrence, CohortEntry, ExclusionReason,
    ExclusionWarning,
};
use crate::data_model::{
    io, CodedRecord, Dataset, DischargeReport, FeatureSchema, FeatureVector, RecurrenceLabel, Split,
};
use crate::entity_extractor::{AnnotatedReport, RulePack};
use crate::error::{Error, Result};
use crate::report2vector::vectorize_report;
use crate::section_parser::SectionLexicon;
use crate::structured2vector::{vectorize_coded, CodeMap};
use crate::vector_merger::{merge_at, merge_structured_only, CellSource, MergeWindows};

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

/// The rule files every stage needs, bound to one schema.
#[derive(Debug, Clone)]
pub struct Resources {
    pub schema: FeatureSchema,
    pub lexicon: SectionLexicon,
    pub rules: RulePack,
    pub codemap: CodeMap,
    pub windows: MergeWindows,
    pub scores: Vec<Score>,
}

/// Optional overrides for the bundled rule files.
#[derive(Debug, Clone, Default)]
pub struct ResourcePaths<'a> {
    pub schema: Option<&'a Path>,
    pub lexicon: Option<&'a Path>,
    pub rules: Option<&'a Path>,
    pub codemap: Option<&'a Path>,
    pub windows: Option<&'a Path>,
    /// Directory of score definition JSON files, loaded in file-name order.
    pub scores: Option<&'a Path>,
}

impl Resources {
    pub fn bundled() -> Result<Self> {
        Resources::load(&ResourcePaths::default())
    }

    pub fn load(paths: &ResourcePaths<'_>) -> Result<Self> {
        let schema = crate::resources::schema_or_default(paths.schema)?;
        schema.require_af_flags()?;
        let lexicon = match paths.lexicon {
            Some(p) => SectionLexicon::load(p)?,
            None => SectionLexicon::bundled(),
        };
        let rules = match paths.rules {
            Some(p) => RulePack::load(p, &schema)?,
            None => RulePack::bundled(&schema)?,
        };
        let codemap = match paths.codemap {
            Some(p) => CodeMap::load(p, &schema)?,
            None => CodeMap::bundled(&schema)?,
        };
        let windows = match paths.windows {
            Some(p) => MergeWindows::load(p)?,
            None => MergeWindows::default(),
        };
        let scores = match paths.scores {
            Some(dir) => load_score_dir(dir, &schema)?,
            None => bundled_scores(&schema)?,
        };
        Ok(Resources {
            schema,
            lexicon,
            rules,
            codemap,
            windows,
            scores,
        })
    }

    pub fn annotate(&self, report: &DischargeReport) -> AnnotatedReport {
        AnnotatedReport::new(report, &self.lexicon, &self.rules)
    }

    pub fn report_vector(&self, a: &AnnotatedReport) -> Result<FeatureVector> {
        vectorize_report(&a.sectioned, &a.extraction.mentions, &a.onset, &self.schema)
    }
}

fn load_score_dir(dir: &Path, schema: &FeatureSchema) -> Result<Vec<Score>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("no score definitions in {}", dir.display())));
    }
    files
        .iter()
        .map(|p| Score::new(ScoreDefinition::load(p)?, schema))
        .collect()
}

/// Groups items by patient id, keeping input order inside each group.
pub fn by_patient<T>(items: &[T], pid: impl Fn(&T) -> &str) -> BTreeMap<&str, Vec<&T>> {
    let mut out: BTreeMap<&str, Vec<&T>> = BTreeMap::new();
    for it in items {
        out.entry(pid(it)).or_default().push(it);
    }
    out
}

/// Cohort entry plus the audit trail of its merged cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatientOutcome {
    pub entry: CohortEntry,
    pub provenance: Option<Vec<Option<CellSource>>>,
}

#[derive(Debug, Clone, Default)]
pub struct CohortBuild {
    /// Every patient seen in either input, in id order.
    pub patients: Vec<PatientOutcome>,
    pub exclusion_warnings: Vec<ExclusionWarning>,
    pub unmapped_codes: usize,
}

impl CohortBuild {
    pub fn entries(&self) -> Vec<CohortEntry> {
        self.patients.iter().map(|p| p.entry.clone()).collect()
    }

    pub fn count(&self, label: RecurrenceLabel) -> usize {
        self.patients
            .iter()
            .filter(|p| p.entry.in_dataset() && p.entry.label == Some(label))
            .count()
    }
}

fn coded_vectors(records: &[&CodedRecord], res: &Resources) -> Result<(Vec<FeatureVector>, usize)> {
    let owned: Vec<CodedRecord> = records.iter().map(|r| (*r).clone()).collect();
    let sv = vectorize_coded(&owned, &res.codemap, &res.schema)?;
    Ok((sv.vectors, sv.unmapped))
}

fn process_patient(
    pid: &str,
    reports: &[&DischargeReport],
    coded: &[&CodedRecord],
    af_coded: bool,
    res: &Resources,
) -> Result<(PatientOutcome, usize)> {
    let mut entry = CohortEntry {
        patient_id: pid.to_string(),
        onset_date: None,
        onset_report_id: None,
        label: None,
        exclusion: None,
        merged: None,
    };
    let (coded_vecs, unmapped) = coded_vectors(coded, res)?;
    if !af_coded {
        entry.exclusion = Some(ExclusionReason::NoAfCode);
        return Ok((PatientOutcome { entry, provenance: None }, unmapped));
    }
    let annotated: Vec<AnnotatedReport> = reports.iter().map(|r| res.annotate(r)).collect();
    let screened: Vec<&AnnotatedReport> = annotated
        .iter()
        .filter(|a| res.rules.mentions_af_term(&a.report().body))
        .collect();
    let confirmation = confirm_onset(&screened);
    let (Some(onset), Some(onset_id)) = (confirmation.onset_date, confirmation.onset_report_id) else {
        entry.exclusion = Some(ExclusionReason::OnsetNotConfirmed);
        return Ok((PatientOutcome { entry, provenance: None }, unmapped));
    };
    let mut vectors = Vec::with_capacity(annotated.len() + coded_vecs.len());
    let mut anchor_idx = None;
    for a in &annotated {
        if a.report().report_id == onset_id {
            anchor_idx = Some(vectors.len());
        }
        vectors.push(res.report_vector(a)?);
    }
    vectors.extend(coded_vecs);
    let anchor_idx = anchor_idx.expect("onset report is among the patient's reports");
    let anchor = vectors[anchor_idx].clone();
    let merged = merge_at(&vectors, Some(anchor_idx), anchor, &res.windows, &res.schema)?;
    let all: Vec<&AnnotatedReport> = annotated.iter().collect();
    entry.label = Some(label_recurrence(onset, &all));
    entry.onset_date = Some(onset);
    entry.onset_report_id = Some(onset_id);
    entry.merged = Some(merged.vector);
    Ok((
        PatientOutcome {
            entry,
            provenance: Some(merged.provenance),
        },
        unmapped,
    ))
}

/// Runs the cohort stages over a whole corpus. Every patient with a report
/// or a coded row gets a manifest entry.
pub fn build_cohort(
    reports: &[DischargeReport],
    coded: &[CodedRecord],
    deaths: &BTreeMap<String, NaiveDate>,
    res: &Resources,
) -> Result<CohortBuild> {
    let af_patients = filter_patients(coded, &res.codemap, &res.schema)?;
    let reports_by = by_patient(reports, |r| r.patient_id.as_str());
    let coded_by = by_patient(coded, |r| r.patient_id.as_str());
    let mut pids: Vec<&str> = reports_by.keys().chain(coded_by.keys()).copied().collect();
    pids.sort_unstable();
    pids.dedup();
    let empty_r: Vec<&DischargeReport> = Vec::new();
    let empty_c: Vec<&CodedRecord> = Vec::new();
    let results: Vec<(PatientOutcome, usize)> = pids
        .par_iter()
        .map(|pid| {
            process_patient(
                pid,
                reports_by.get(pid).unwrap_or(&empty_r),
                coded_by.get(pid).unwrap_or(&empty_c),
                af_patients.contains_key(*pid),
                res,
            )
        })
        .collect::<Result<_>>()?;
    let unmapped_codes = results.iter().map(|r| r.1).sum();
    let mut patients: Vec<PatientOutcome> = results.into_iter().map(|r| r.0).collect();
    let mut entries: Vec<CohortEntry> = patients.iter().map(|p| p.entry.clone()).collect();
    let exclusion_warnings = apply_exclusions(&mut entries, &res.schema, deaths)?;
    for (p, e) in patients.iter_mut().zip(entries) {
        p.entry = e;
    }
    Ok(CohortBuild {
        patients,
        exclusion_warnings,
        unmapped_codes,
    })
}

/// Per-class seeded shuffle; the first `round(test_fraction * n_class)`
/// rows of each class go to the test split.
pub fn stratified_split(labels: &[bool], test_fraction: f64, seed: u64) -> Result<Vec<Split>> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidArgument(format!("test fraction must lie in [0, 1), got {test_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = vec![Split::Train; labels.len()];
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_test = (test_fraction * idx.len() as f64).round() as usize;
        for &i in &idx[..n_test] {
            splits[i] = Split::Test;
        }
    }
    Ok(splits)
}

/// Dataset of the in-dataset entries, labeled `Recurred = true`.
pub fn build_dataset(cohort: &[CohortEntry], schema: &FeatureSchema, test_fraction: f64, seed: u64) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for e in cohort.iter().filter(|e| e.in_dataset()) {
        let v = e
            .merged
            .clone()
            .ok_or_else(|| Error::InvalidArgument(format!("patient {} has no merged vector", e.patient_id)))?;
        rows.push(v);
        labels.push(e.label == Some(RecurrenceLabel::Recurred));
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no patient reached the dataset".into()));
    }
    let splits = stratified_split(&labels, test_fraction, seed)?;
    Dataset::new(schema.clone(), rows, labels, splits)
}

/// Per-report vectors for a corpus, in corpus order.
pub fn vectorize_reports(reports: &[DischargeReport], res: &Resources) -> Result<Vec<FeatureVector>> {
    reports.par_iter().map(|r| res.report_vector(&res.annotate(r))).collect()
}

/// Per-patient, per-date coded vectors, in patient then date order.
pub fn vectorize_all_coded(coded: &[CodedRecord], res: &Resources) -> Result<Vec<FeatureVector>> {
    let groups = by_patient(coded, |r| r.patient_id.as_str());
    let per: Vec<Vec<FeatureVector>> = groups
        .par_iter()
        .map(|(_, recs)| coded_vectors(recs, res).map(|v| v.0))
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Structured-only baseline vector of one patient anchored at `onset`.
pub fn structured_only_vector(pid: &str, onset: NaiveDate, coded: &[&CodedRecord], res: &Resources) -> Result<FeatureVector> {
    let (vectors, _) = coded_vectors(coded, res)?;
    Ok(merge_structured_only(pid, onset, &vectors, &res.windows, &res.schema)?.vector)
}

/// Writes the cohort manifest CSV.
pub fn write_manifest_file(path: &Path, cohort: &[CohortEntry]) -> Result<()> {
    crate::cohort_builder::write_manifest(io::create_file(path)?, cohort)
}

pub fn read_manifest_file(path: &Path) -> Result<Vec<CohortEntry>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    crate::cohort_builder::read_manifest(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_stratified_and_seeded() {
        let labels: Vec<bool> = (0..50).map(|i| i % 5 != 0).collect();
        let s = stratified_split(&labels, 0.2, 3).unwrap();
        let test_pos = (0..50).filter(|&i| s[i] == Split::Test && labels[i]).count();
        let test_neg = (0..50).filter(|&i| s[i] == Split::Test && !labels[i]).count();
        assert_eq!((test_pos, test_neg), (8, 2));
        assert_eq!(s, stratified_split(&labels, 0.2, 3).unwrap());
    }
}
