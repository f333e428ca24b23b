//! Shared domain types, the feature schema and the interchange formats.

pub mod io;
mod report;
mod schema;
mod vector;

pub use report::{
    CanonicalSection, CodeSystem, CodedRecord, DischargeReport, Section, SectionedReport, TextSpan,
};
pub use schema::{
    ColumnKind, ColumnSpec, FeatureSchema, WindowClass, AF_FLAG_COLUMNS, AF_TYPE,
    NEW_AF_DIAGNOSIS, POTENTIAL_RECURRENCE, PRIOR_AF_IN_HISTORY,
};
pub use vector::{Dataset, FeatureVector, PatientTimeline, RecurrenceLabel, Split};

/// AF type codes stored in the `af_type` column.
pub mod af_type {
    pub const UNSPECIFIED: u8 = 0;
    pub const PAROXYSMAL: u8 = 1;
    pub const PERSISTENT: u8 = 2;
    pub const PERMANENT: u8 = 3;
}
