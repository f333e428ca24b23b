//! One sectioned, annotated report to one feature vector.
//!
//! Binary and categorical columns take the value of an affirmed mention
//! (the last one when several disagree), 0 when only negated mentions exist,
//! and stay missing when unmentioned. Numeric columns take the last valid
//! capture. The AF flags are always set from the onset classification.

use crate::data_model::{
    FeatureSchema, FeatureVector, SectionedReport, AF_TYPE, NEW_AF_DIAGNOSIS, POTENTIAL_RECURRENCE,
    PRIOR_AF_IN_HISTORY,
};
use crate::entity_extractor::{EntityMention, OnsetInfo};
use crate::error::{Error, Result};

pub fn vectorize_report(
    sectioned: &SectionedReport,
    mentions: &[EntityMention],
    onset: &OnsetInfo,
    schema: &FeatureSchema,
) -> Result<FeatureVector> {
    let report = &sectioned.report;
    let mut v = FeatureVector::missing(
        &report.patient_id,
        Some(report.report_id.clone()),
        report.date,
        schema.len(),
    );
    let af_type = schema.require(AF_TYPE)?;
    let mut affirmed = vec![false; schema.len()];
    for m in mentions {
        let Some(col) = m.column else {
            continue;
        };
        if col >= schema.len() || schema.column(col).name != m.target {
            return Err(Error::SchemaMismatch(format!(
                "mention target `{}` does not match the vectorization schema",
                m.target
            )));
        }
        if col == af_type {
            continue;
        }
        let kind = schema.column(col).kind;
        if m.numeric {
            if let Some(x) = m.value.filter(|x| kind.accepts(*x)) {
                v.cells[col] = Some(x);
            }
        } else if m.negated {
            if !affirmed[col] {
                v.cells[col] = Some(0.0);
            }
        } else if let Some(x) = m.value {
            v.cells[col] = Some(x);
            affirmed[col] = true;
        }
    }
    let flag = |b: bool| Some(if b { 1.0 } else { 0.0 });
    v.cells[schema.require(NEW_AF_DIAGNOSIS)?] = flag(onset.is_af_report);
    v.cells[schema.require(PRIOR_AF_IN_HISTORY)?] = flag(onset.af_in_history);
    v.cells[schema.require(POTENTIAL_RECURRENCE)?] = flag(onset.is_af_report && onset.af_in_history);
    v.cells[af_type] = onset.is_af_report.then_some(f64::from(onset.af_type));
    schema.validate_vector(&v)?;
    Ok(v)
}
