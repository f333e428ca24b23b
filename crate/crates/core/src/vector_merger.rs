//! Onset-anchored merge of all vectors of one patient.
//!
//! Each missing cell of the onset vector is filled from the in-window
//! candidate nearest to onset. Ties go to the earlier date, then to report
//! vectors over coded ones, then to timeline order. Binary history columns
//! are additionally OR'd over every in-window affirmation. AF flag columns
//! only ever come from the onset vector.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data_model::{ColumnKind, FeatureSchema, FeatureVector, PatientTimeline, WindowClass};
use crate::error::{Error, Result};

/// Offsets in days relative to onset; `None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub lower: Option<i64>,
    pub upper: Option<i64>,
}

impl Window {
    pub fn contains(&self, offset: i64) -> bool {
        self.lower.is_none_or(|l| offset >= l) && self.upper.is_none_or(|u| offset <= u)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeWindows {
    windows: BTreeMap<WindowClass, Window>,
}

impl Default for MergeWindows {
    fn default() -> Self {
        MergeWindows::parse(crate::resources::WINDOWS_CSV).expect("bundled windows are valid")
    }
}

impl MergeWindows {
    pub fn new(windows: BTreeMap<WindowClass, Window>) -> Result<Self> {
        for class in WindowClass::ALL {
            let w = windows
                .get(&class)
                .ok_or_else(|| Error::Config(format!("no merge window for class {class}")))?;
            if let (Some(l), Some(u)) = (w.lower, w.upper) {
                if l > u {
                    return Err(Error::Config(format!("{class} window has lower {l} > upper {u}")));
                }
            }
            if class == WindowClass::History && w.upper.is_none_or(|u| u > 0) {
                return Err(Error::Config("history window must end at or before onset".into()));
            }
        }
        Ok(MergeWindows { windows })
    }

    /// Parses `window_class,lower_days,upper_days`; empty bounds are open.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut windows = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::malformed("windows", "csv", e.to_string()))?;
            let class: WindowClass = rec[0].parse()?;
            let bound = |s: &str| -> Result<Option<i64>> {
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse()
                    .map(Some)
                    .map_err(|_| Error::malformed(class.as_str(), "window", format!("bad bound `{s}`")))
            };
            let w = Window {
                lower: bound(&rec[1])?,
                upper: bound(&rec[2])?,
            };
            if windows.insert(class, w).is_some() {
                return Err(Error::Config(format!("window for {class} listed twice")));
            }
        }
        MergeWindows::new(windows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MergeWindows::parse(&text)
    }

    pub fn get(&self, class: WindowClass) -> Window {
        self.windows[&class]
    }
}

/// Where a merged cell came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSource {
    pub date: NaiveDate,
    pub report_id: Option<String>,
    pub offset_days: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedPatient {
    pub vector: FeatureVector,
    pub onset_date: NaiveDate,
    pub provenance: Vec<Option<CellSource>>,
}

/// Earliest vector flagged as a new diagnosis without prior AF. Sets the
/// timeline's onset date.
pub fn find_onset_vector(timeline: &mut PatientTimeline, schema: &FeatureSchema) -> Result<usize> {
    let idx = *timeline
        .onset_candidates(schema)?
        .first()
        .ok_or_else(|| Error::NoOnset(timeline.patient_id.clone()))?;
    timeline.onset_date = Some(timeline.vectors()[idx].date);
    Ok(idx)
}

pub fn merge_patient(
    timeline: &mut PatientTimeline,
    windows: &MergeWindows,
    schema: &FeatureSchema,
) -> Result<MergedPatient> {
    let onset = find_onset_vector(timeline, schema)?;
    let anchor = timeline.vectors()[onset].clone();
    merge_at(timeline.vectors(), Some(onset), anchor, windows, schema)
}

/// Merges `vectors` into `anchor`, whose date is the onset. `skip` excludes
/// the anchor's own position in `vectors` from the candidates.
pub fn merge_at(
    vectors: &[FeatureVector],
    skip: Option<usize>,
    anchor: FeatureVector,
    windows: &MergeWindows,
    schema: &FeatureSchema,
) -> Result<MergedPatient> {
    schema.validate_vector(&anchor)?;
    let onset_date = anchor.date;
    let anchor_source = CellSource {
        date: onset_date,
        report_id: anchor.source_report_id.clone(),
        offset_days: 0,
    };
    // Candidates in preference order.
    let mut order: Vec<(usize, i64)> = vectors
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, v)| (i, (v.date - onset_date).num_days()))
        .collect();
    for (i, _) in &order {
        schema.validate_vector(&vectors[*i])?;
    }
    order.sort_by(|a, b| {
        let (va, vb) = (&vectors[a.0], &vectors[b.0]);
        a.1.abs()
            .cmp(&b.1.abs())
            .then(va.date.cmp(&vb.date))
            .then(vb.is_report().cmp(&va.is_report()))
            .then(a.0.cmp(&b.0))
    });

    let mut merged = anchor;
    let mut provenance: Vec<Option<CellSource>> = merged
        .cells
        .iter()
        .map(|c| c.map(|_| anchor_source.clone()))
        .collect();
    let source = |i: usize, offset: i64| CellSource {
        date: vectors[i].date,
        report_id: vectors[i].source_report_id.clone(),
        offset_days: offset,
    };
    for (col, spec) in schema.columns().iter().enumerate() {
        if spec.window_class == WindowClass::AfFlag {
            continue;
        }
        let window = windows.get(spec.window_class);
        let mut in_window = order
            .iter()
            .filter(|(i, off)| window.contains(*off) && vectors[*i].cells[col].is_some());
        let or_column = spec.kind == ColumnKind::Binary && spec.window_class == WindowClass::History;
        if or_column && merged.cells[col] != Some(1.0) {
            if let Some(&(i, off)) = order
                .iter()
                .find(|(i, off)| window.contains(*off) && vectors[*i].cells[col] == Some(1.0))
            {
                merged.cells[col] = Some(1.0);
                provenance[col] = Some(source(i, off));
                continue;
            }
        }
        if merged.cells[col].is_none() {
            if let Some(&(i, off)) = in_window.next() {
                merged.cells[col] = vectors[i].cells[col];
                provenance[col] = Some(source(i, off));
            }
        }
    }
    schema.validate_vector(&merged)?;
    Ok(MergedPatient {
        vector: merged,
        onset_date,
        provenance,
    })
}

/// Structured-only baseline: an empty vector at `onset` filled from the
/// given (coded) vectors under the same windows.
pub fn merge_structured_only(
    patient_id: &str,
    onset: NaiveDate,
    vectors: &[FeatureVector],
    windows: &MergeWindows,
    schema: &FeatureSchema,
) -> Result<MergedPatient> {
    let anchor = FeatureVector::missing(patient_id, None, onset, schema.len());
    merge_at(vectors, None, anchor, windows, schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_windows_cover_every_class() {
        let w = MergeWindows::default();
        assert_eq!(w.get(WindowClass::Lab), Window { lower: Some(-183), upper: Some(92) });
        assert!(w.get(WindowClass::History).contains(-5000));
        assert!(!w.get(WindowClass::History).contains(1));
    }

    #[test]
    fn inverted_window_is_rejected() {
        let text = "window_class,lower_days,upper_days\nhistory,,0\nlab,10,-10\n\
                    procedure,-183,92\ndemographic,,\naf_flag,0,0\n";
        assert!(MergeWindows::parse(text).is_err());
    }
}
