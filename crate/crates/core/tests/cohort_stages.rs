//! Coded vectors, onset-anchored merging and the cohort rules on hand-built
//! patients.

use std::collections::BTreeMap;

use afrec_core::cohort_builder::{
    apply_exclusions, confirm_onset, exclusion_for, filter_patients, label_recurrence, term_screen, CohortEntry,
    ExclusionReason,
};
use afrec_core::data_model::{
    CodeSystem, CodedRecord, DischargeReport, FeatureVector, PatientTimeline, RecurrenceLabel, NEW_AF_DIAGNOSIS,
    PRIOR_AF_IN_HISTORY,
};
use afrec_core::entity_extractor::AnnotatedReport;
use afrec_core::error::Error;
use afrec_core::pipeline::Resources;
use afrec_core::structured2vector::vectorize_coded;
use afrec_core::vector_merger::{find_onset_vector, merge_patient};
use chrono::{Days, NaiveDate};

fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

fn coded(pid: &str, day: &str, system: CodeSystem, code: &str, value: Option<f64>) -> CodedRecord {
    CodedRecord {
        patient_id: pid.into(),
        date: date(day),
        code_system: system,
        code: code.into(),
        value,
        unit: None,
    }
}

fn single_vector(res: &Resources, record: CodedRecord) -> FeatureVector {
    let out = vectorize_coded(&[record], &res.codemap, &res.schema).unwrap();
    assert_eq!(out.vectors.len(), 1);
    out.vectors.into_iter().next().unwrap()
}

#[test]
fn af_code_sets_the_new_diagnosis_flag() {
    let res = Resources::bundled().unwrap();
    let v = single_vector(&res, coded("P1", "2019-03-01", CodeSystem::Icd10, "I48.0", None));
    assert_eq!(v.date, date("2019-03-01"));
    assert_eq!(v.cells[res.schema.index_of(NEW_AF_DIAGNOSIS).unwrap()], Some(1.0));
    assert!(!v.is_report());
}

#[test]
fn drug_code_maps_to_its_group() {
    let res = Resources::bundled().unwrap();
    let v = single_vector(&res, coded("P1", "2019-03-01", CodeSystem::Atc, "C07AB02", None));
    assert_eq!(v.cells[res.schema.index_of("c07").unwrap()], Some(1.0));
}

#[test]
fn lab_value_is_copied() {
    let res = Resources::bundled().unwrap();
    let mut r = coded("P1", "2019-03-01", CodeSystem::Lab, "K", Some(4.1));
    r.unit = Some("mmol/L".into());
    let v = single_vector(&res, r);
    assert_eq!(v.cells[res.schema.index_of("potassium").unwrap()], Some(4.1));
}

#[test]
fn unmapped_codes_are_counted_not_fatal() {
    let res = Resources::bundled().unwrap();
    let out = vectorize_coded(
        &[coded("P1", "2019-03-01", CodeSystem::Icd10, "Z99.9", None)],
        &res.codemap,
        &res.schema,
    )
    .unwrap();
    assert_eq!(out.unmapped, 1);
}

#[test]
fn negative_lab_value_leaves_the_cell_missing() {
    let res = Resources::bundled().unwrap();
    let out = vectorize_coded(
        &[coded("P1", "2019-03-01", CodeSystem::Lab, "K", Some(-1.0))],
        &res.codemap,
        &res.schema,
    )
    .unwrap();
    let k = res.schema.index_of("potassium").unwrap();
    assert!(out.vectors.iter().all(|v| v.cells[k].is_none()));
    assert_eq!(out.warnings.len(), 1);
}

/// Coded-style vector with the given cells set.
fn vector(res: &Resources, day: NaiveDate, cells: &[(&str, f64)]) -> FeatureVector {
    let mut v = FeatureVector::missing("P1", None, day, res.schema.len());
    for (name, x) in cells {
        v.cells[res.schema.index_of(name).unwrap()] = Some(*x);
    }
    v
}

fn onset_cells() -> [(&'static str, f64); 2] {
    [(NEW_AF_DIAGNOSIS, 1.0), (PRIOR_AF_IN_HISTORY, 0.0)]
}

#[test]
fn earliest_onset_vector_is_chosen() {
    let res = Resources::bundled().unwrap();
    let t = date("2020-01-10");
    let later = t + Days::new(30);
    let mut tl = PatientTimeline::new(
        "P1",
        vec![vector(&res, later, &onset_cells()), vector(&res, t, &onset_cells())],
    )
    .unwrap();
    let idx = find_onset_vector(&mut tl, &res.schema).unwrap();
    assert_eq!(tl.vectors()[idx].date, t);
    assert_eq!(tl.onset_date, Some(t));

    let mut none = PatientTimeline::new("P1", vec![vector(&res, t, &[("hypertension", 1.0)])]).unwrap();
    assert!(matches!(find_onset_vector(&mut none, &res.schema), Err(Error::NoOnset(_))));
}

#[test]
fn lab_window_bounds_the_merge() {
    let res = Resources::bundled().unwrap();
    let t = date("2020-06-01");
    let k = res.schema.index_of("potassium").unwrap();
    let merged = |offset_back: u64| {
        let mut tl = PatientTimeline::new(
            "P1",
            vec![
                vector(&res, t, &onset_cells()),
                vector(&res, t - Days::new(offset_back), &[("potassium", 4.2)]),
            ],
        )
        .unwrap();
        merge_patient(&mut tl, &res.windows, &res.schema).unwrap()
    };
    let near = merged(30);
    assert_eq!(near.vector.cells[k], Some(4.2));
    assert_eq!(near.provenance[k].as_ref().unwrap().offset_days, -30);
    assert_eq!(merged(200).vector.cells[k], None);
}

#[test]
fn history_window_has_no_lower_bound() {
    let res = Resources::bundled().unwrap();
    let t = date("2020-06-01");
    let hf = res.schema.index_of("heart_failure").unwrap();
    let mut tl = PatientTimeline::new(
        "P1",
        vec![
            vector(&res, t, &onset_cells()),
            vector(&res, t - Days::new(3 * 365), &[("heart_failure", 1.0)]),
        ],
    )
    .unwrap();
    let m = merge_patient(&mut tl, &res.windows, &res.schema).unwrap();
    assert_eq!(m.vector.cells[hf], Some(1.0));
    assert_eq!(m.onset_date, t);
}

#[test]
fn earliest_af_code_is_the_onset_candidate() {
    let res = Resources::bundled().unwrap();
    let records = vec![
        coded("A", "2019-04-02", CodeSystem::Icd10, "I48.0", None),
        coded("A", "2016-09-12", CodeSystem::Icd10, "I48.1", None),
        coded("B", "2018-01-01", CodeSystem::Icd10, "I48", None),
        coded("C", "2018-01-01", CodeSystem::Icd10, "I10", None),
    ];
    let found = filter_patients(&records, &res.codemap, &res.schema).unwrap();
    let expected: BTreeMap<String, NaiveDate> =
        [("A".to_string(), date("2016-09-12")), ("B".to_string(), date("2018-01-01"))].into();
    assert_eq!(found, expected);
}

fn report(id: &str, day: NaiveDate, body: &str) -> DischargeReport {
    DischargeReport::new(id, "P1", day, body).unwrap()
}

#[test]
fn keyword_screen_ignores_negation() {
    let res = Resources::bundled().unwrap();
    let d = date("2020-01-01");
    let reports = vec![
        report("R1", d, "Diagnóstico: ACxFA.\n"),
        report("R2", d, "Diagnóstico: HTA.\n"),
        report("R3", d, "Diagnóstico: no FA.\n"),
    ];
    let kept: Vec<&str> = term_screen(&reports, &res.rules).iter().map(|r| r.report_id.as_str()).collect();
    assert_eq!(kept, ["R1", "R3"]);
}

const ONSET_BODY: &str = "Antecedentes: HTA.\nDiagnóstico: fibrilación auricular.\n";
const REPEAT_BODY: &str = "Antecedentes: FA previa.\nDiagnóstico: fibrilación auricular.\n";
const SINUS_BODY: &str = "Pruebas complementarias: ECG en ritmo sinusal.\n";

#[test]
fn onset_needs_a_confirming_report() {
    let res = Resources::bundled().unwrap();
    let d = date("2020-01-01");
    let a = [
        res.annotate(&report("R2", d + Days::new(10), ONSET_BODY)),
        res.annotate(&report("R1", d, ONSET_BODY)),
    ];
    let c = confirm_onset(&a.iter().collect::<Vec<_>>());
    assert!(c.confirmed);
    assert_eq!((c.onset_report_id.as_deref(), c.onset_date), (Some("R1"), Some(d)));

    let prior = [res.annotate(&report("R1", d, REPEAT_BODY))];
    assert!(!confirm_onset(&prior.iter().collect::<Vec<_>>()).confirmed);
    assert!(!confirm_onset(&[]).confirmed);
}

fn label(res: &Resources, onset: NaiveDate, reports: &[(u64, &str)]) -> RecurrenceLabel {
    let a: Vec<AnnotatedReport> = reports
        .iter()
        .enumerate()
        .map(|(i, (days, body))| res.annotate(&report(&format!("R{i}"), onset + Days::new(*days), body)))
        .collect();
    label_recurrence(onset, &a.iter().collect::<Vec<_>>())
}

#[test]
fn recurrence_labels() {
    let res = Resources::bundled().unwrap();
    let t = date("2019-02-01");
    assert_eq!(label(&res, t, &[(180, REPEAT_BODY)]), RecurrenceLabel::Recurred);
    assert_eq!(label(&res, t, &[(240, SINUS_BODY)]), RecurrenceLabel::NoRecurrence);
    assert_eq!(label(&res, t, &[]), RecurrenceLabel::Discarded);
    assert_eq!(label(&res, t, &[(200, "Diagnóstico: HTA.\n")]), RecurrenceLabel::Discarded);
    // Evidence of AF outranks a sinus rhythm ECG in the same window.
    assert_eq!(label(&res, t, &[(100, SINUS_BODY), (300, REPEAT_BODY)]), RecurrenceLabel::Recurred);
}

#[test]
fn age_and_early_death_exclusions() {
    let t = date("2020-01-01");
    assert_eq!(exclusion_for(t, Some(91.0), None), Some(ExclusionReason::AgeOver90));
    assert_eq!(exclusion_for(t, Some(90.0), None), None);
    assert_eq!(exclusion_for(t, Some(70.0), Some(t + Days::new(60))), Some(ExclusionReason::EarlyDeath));
    assert_eq!(exclusion_for(t, Some(70.0), Some(t + Days::new(400))), None);
}

#[test]
fn missing_age_keeps_the_patient_with_a_warning() {
    let res = Resources::bundled().unwrap();
    let t = date("2020-01-01");
    let entry = |pid: &str, age: Option<f64>| {
        let mut v = FeatureVector::missing(pid, None, t, res.schema.len());
        v.cells[res.schema.index_of("age").unwrap()] = age;
        CohortEntry {
            patient_id: pid.into(),
            onset_date: Some(t),
            onset_report_id: Some(format!("{pid}-R")),
            label: Some(RecurrenceLabel::Recurred),
            exclusion: None,
            merged: Some(v),
        }
    };
    let mut cohort = vec![entry("A", None), entry("B", Some(95.0)), entry("C", Some(60.0))];
    let deaths = BTreeMap::from([("C".to_string(), t + Days::new(20))]);
    let warnings = apply_exclusions(&mut cohort, &res.schema, &deaths).unwrap();
    assert_eq!(warnings.len(), 1);
    assert_eq!(warnings[0].patient_id, "A");
    let reasons: Vec<_> = cohort.iter().map(|e| e.exclusion).collect();
    assert_eq!(reasons, [None, Some(ExclusionReason::AgeOver90), Some(ExclusionReason::EarlyDeath)]);
    assert!(cohort[0].in_dataset());
}
