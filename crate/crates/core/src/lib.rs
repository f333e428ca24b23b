//! Pipeline toolkit that turns free-text discharge reports and coded EHR rows
//! into an onset-anchored, patient-level dataset for atrial fibrillation
//! recurrence prediction, then scores, trains and evaluates on it.
//!
//! Stages, in pipeline order:
//!
//! - [`section_parser`] and [`entity_extractor`] read report text,
//! - [`report2vector`] and [`structured2vector`] produce per-date vectors,
//! - [`vector_merger`] anchors them at the AF onset,
//! - [`cohort_builder`] selects patients and assigns silver labels,
//! - [`clinical_scores`], [`preprocessing`], [`models`] and [`evaluation`]
//!   build and assess predictors,
//! - [`synthetic_corpus`] generates corpora with a known ground truth.
//!
//! [`pipeline`] chains the cohort stages over a whole corpus, [`experiment`]
//! trains and compares the systems, and [`external`] runs third-party
//! predictors as subprocesses over CSV files.

pub mod clinical_scores;
pub mod cohort_builder;
pub mod data_model;
pub mod entity_extractor;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod external;
pub mod models;
pub mod pipeline;
pub mod preprocessing;
pub mod report2vector;
pub mod resources;
pub mod section_parser;
pub mod structured2vector;
pub mod synthetic_corpus;
pub mod text;
pub mod vector_merger;

pub use error::{Error, ErrorKind, Result};
